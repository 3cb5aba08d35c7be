#!/usr/bin/python
# -*- coding: utf-8 -*-
#
# This file is part of ris-statdesign
#
# ris-statdesign is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# ris-statdesign is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with ris-statdesign.  If not, see <http://www.gnu.org/licenses/>.

"""Fast oracle checks of the closed forms against sampling and differencing."""

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from library.ris_channel import ScenarioConfig, build_statistical_model, sample_channel
from library.ris_common import NumericalError, crandn, psd_sqrt, vec
from library.ris_optimizer import (
    StatisticalDesign, build_gradient_cache, phase_gradient, surrogate_objective,
    update_chi, update_lambda,
)
from library.ris_statistics import (
    PhaseState, effective_covariance, gaussian_fourth_moment, sinr_lower_bound,
    variance_context, variance_of_useful_signal,
)

log = logging.getLogger(__name__)

Z_LIMIT = 4.0
FD_STEP = 1e-5


@dataclass
class SelftestSettings:
    draws: int
    trials: int
    covariance_rtol: float
    gradient_rtol: float = 1e-5
    tightness_atol: float = 1e-9

    @classmethod
    def for_mode(cls, quick):
        if quick:
            return cls(draws=20000, trials=2, covariance_rtol=0.06)
        return cls(draws=100000, trials=5, covariance_rtol=0.03)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    elapsed: float = 0.0

    def as_dict(self):
        return dict(name=self.name, passed=self.passed, detail=self.detail,
                    elapsed=round(self.elapsed, 3))


def small_model(rng, beta, M=4, N=8, K=2):
    config = ScenarioConfig(M=M, N=N, K=K, beta=beta)
    return build_statistical_model(config, rng)


def sample_mean(x):
    """Mean of complex draws and its standard error."""
    n = x.shape[0]
    mean = np.mean(x)
    return mean, float(np.std(x) / math.sqrt(n))


def sample_variance(x):
    """E|x - Ex|^2 of complex draws and its standard error."""
    dev = np.abs(x - np.mean(x)) ** 2
    return float(np.mean(dev)), float(np.std(dev) / math.sqrt(x.shape[0]))


def check_fourth_moment(rng, settings):
    worst = 0.0
    for _ in range(settings.trials):
        C = crandn(rng, (3, 3))
        C = C @ C.conj().T
        M1, M2 = crandn(rng, (3, 3)), crandn(rng, (3, 3))
        M1, M2 = M1 @ M1.conj().T, M2 @ M2.conj().T
        u = crandn(rng, (settings.draws, 3)) @ psd_sqrt(C).T
        q1 = np.einsum('si,ij,sj->s', u.conj(), M1, u)
        q2 = np.einsum('si,ij,sj->s', u.conj(), M2, u)
        estimate, se = sample_mean(q1 * q2)
        closed = gaussian_fourth_moment(C, M1, M2)
        worst = max(worst, abs(estimate - closed) / se)
    return worst <= Z_LIMIT, "worst deviation %.2f standard errors" % worst


def check_useful_variance(rng, settings, context_factory=variance_context):
    worst = 0.0
    for beta in (0.0, 0.5, 1.0):
        for _ in range(settings.trials):
            model = small_model(rng, beta)
            phase = PhaseState.random(model.N, rng)
            cov = effective_covariance(model, phase)
            ctx = context_factory(model, phase)
            h = sample_channel(model, phase, rng, size=settings.draws).h
            for k in range(model.K):
                A = crandn(rng, (model.M, model.M))
                closed = variance_of_useful_signal(vec(A), ctx, cov.C[k], k)
                x = np.einsum('sm,mn,sn->s', h[:, k].conj(), A, h[:, k])
                estimate, se = sample_variance(x)
                worst = max(worst, abs(estimate - closed) / se)
    return worst <= Z_LIMIT, "worst deviation %.2f standard errors" % worst


def check_effective_covariance(rng, settings):
    worst = 0.0
    for beta in (0.0, 0.5, 1.0, None):
        model = small_model(rng, 0.5 if beta is None else beta)
        if beta is None:
            model = model.without_ris()
        phase = PhaseState.random(model.N, rng)
        C = effective_covariance(model, phase).C
        h = sample_channel(model, phase, rng, size=settings.draws).h
        S = np.einsum('ski,skj->kij', h, h.conj()) / h.shape[0]
        for k in range(model.K):
            worst = max(worst, np.linalg.norm(S[k] - C[k]) / np.linalg.norm(C[k]))
    return worst <= settings.covariance_rtol, "worst relative error %.4f" % worst


def _random_state(rng, P=100.0, K=2):
    model = small_model(rng, 0.5, K=K)
    design = StatisticalDesign(model, P, rng=rng)
    state = design.initialize()
    state = state.replace(lam=rng.uniform(0.1, 2.0, model.K),
                          chi=0.1 * crandn(rng, model.K))
    return model, state


def check_phase_gradient(rng, settings):
    worst = 0.0
    for _ in range(settings.trials):
        model, state = _random_state(rng)
        analytic = phase_gradient(build_gradient_cache(model, state), state.phase)
        numeric = np.empty(model.N)
        for n in range(model.N):
            step = np.zeros(model.N)
            step[n] = FD_STEP
            up = surrogate_objective(state.replace(phase=state.phase.moved(step)), model)
            down = surrogate_objective(state.replace(phase=state.phase.moved(-step)), model)
            numeric[n] = (up - down) / (2.0 * FD_STEP)
        worst = max(worst, np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-300))
    return worst <= settings.gradient_rtol, "worst relative error %.2e" % worst


def check_fp_tightness(rng, settings):
    worst = 0.0
    for _ in range(10 * settings.trials):
        model, state = _random_state(rng)
        state = state.replace(a=crandn(rng, state.a.shape))
        cov = effective_covariance(model, state.phase)
        ctx = variance_context(model, state.phase)
        gammas = sinr_lower_bound(state.A, cov, ctx)
        state = state.replace(lam=update_lambda(state, gammas))
        state = state.replace(chi=update_chi(state, cov, ctx))
        gap = surrogate_objective(state, model, cov, ctx) - math.fsum(np.log1p(gammas))
        worst = max(worst, abs(gap))
    return worst <= settings.tightness_atol, "worst gap %.2e nats" % worst


CHECKS = [
    ('fourth-moment', check_fourth_moment),
    ('useful-signal-variance', check_useful_variance),
    ('effective-covariance', check_effective_covariance),
    ('phase-gradient', check_phase_gradient),
    ('fp-tightness', check_fp_tightness),
]


def run_selftest(quick=False, seed=0, context_factory=variance_context):
    """Run every check on its own deterministic stream."""
    settings = SelftestSettings.for_mode(quick)
    results = []
    for index, (name, check) in enumerate(CHECKS):
        rng = np.random.default_rng([seed, index])
        started = time.perf_counter()
        try:
            if check is check_useful_variance:
                passed, detail = check(rng, settings, context_factory)
            else:
                passed, detail = check(rng, settings)
        except NumericalError as e:
            passed, detail = False, "numerical failure: %s" % e
        result = CheckResult(name, bool(passed), detail, time.perf_counter() - started)
        log.info("%s: %s (%s)", name, 'pass' if passed else 'FAIL', detail)
        results.append(result)
    return results
