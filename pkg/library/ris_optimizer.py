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

"""Offline statistical design of the RIS phases and the bilinear transforms.

Block coordinate ascent on the fractional-programming surrogate

    f = sum_k log(1 + lam_k) - lam_k + 2 sqrt(1 + lam_k) Re{chi_k^* c_k^H a_k}
        - |chi_k|^2 (|c_k^H a_k|^2 + sum_j a_j^H (C_j^T kron C_k) a_j
                     + a_k^H J_k a_k + 1)

over the blocks lam, chi, a and the phase angles. ``power_scaling='equality'``
replaces the unit noise term by the normalised transmit power during the
transform and phase blocks and rescales (a, chi) -> (alpha a, chi / alpha)
to the budget after each of them; this leaves that penalised surrogate
unchanged and makes the lower-bound sum-rate nondecreasing sweep to sweep.
``power_scaling='violating'`` follows the plain schedule: scale the
transforms down only when they exceed the budget.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.linalg

from library.ris_common import (
    BracketError, ConsistencyError, DegenerateStateError, DimensionError,
    NumericalError, unvec_stack, validate_params,
)
from library.ris_statistics import (
    PhaseState, effective_covariance, explicit_J, sinr_lower_bound,
    sinr_terms, sum_rate_lower_bound, transmit_power, variance_context,
)

log = logging.getLogger(__name__)

A_UPDATES = ['closed-form', 'bisection']
POWER_SCALINGS = ['equality', 'violating']
INITIAL_LAMBDA = 1.0
INITIAL_CHI = 0.1
MONOTONE_ATOL = 1e-9
BISECTION_RTOL = 1e-6
MAX_DOUBLINGS = 200
MAX_BISECTIONS = 200

OPTIMIZER_ARGUMENT_SPEC = dict(
    tol=dict(type='float', default=1e-6),
    max_iter=dict(type='int', default=200),
    a_update=dict(default='closed-form', choices=A_UPDATES),
    power_scaling=dict(default='equality', choices=POWER_SCALINGS),
    inner_steps=dict(type='int', default=1),
    armijo_kappa0=dict(type='float', default=1.0),
    armijo_tau=dict(type='float', default=0.5),
    armijo_c=dict(type='float', default=1e-4),
    armijo_max_backtracks=dict(type='int', default=40),
    armijo_adaptive=dict(type='bool', default=True),
    jitter=dict(type='bool', default=False),
    check_monotone=dict(type='bool', default=True),
)


@dataclass
class OptimizerOptions:
    tol: float = 1e-6
    max_iter: int = 200
    a_update: str = 'closed-form'
    power_scaling: str = 'equality'
    inner_steps: int = 1
    armijo_kappa0: float = 1.0
    armijo_tau: float = 0.5
    armijo_c: float = 1e-4
    armijo_max_backtracks: int = 40
    armijo_adaptive: bool = True
    jitter: bool = False
    check_monotone: bool = True
    optimize_phase: bool = True
    seed: int = 0

    @classmethod
    def from_params(cls, params, **overrides):
        values = validate_params(OPTIMIZER_ARGUMENT_SPEC, params)
        values.update(overrides)
        options = cls(**values)
        if options.max_iter < 1 or options.inner_steps < 1:
            raise ValueError("max_iter and inner_steps must be at least 1")
        return options


@dataclass
class OptimizerState:
    lam: np.ndarray
    chi: np.ndarray
    a: np.ndarray
    phase: PhaseState
    trace: List[dict] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    @property
    def M(self):
        return int(round(math.sqrt(self.a.shape[1])))

    @property
    def A(self):
        return unvec_stack(self.a, self.M)

    def replace(self, **changes):
        values = dict(lam=self.lam, chi=self.chi, a=self.a, phase=self.phase,
                      trace=self.trace, converged=self.converged, iterations=self.iterations)
        values.update(changes)
        return OptimizerState(**values)

    @property
    def rates(self):
        return [record['rate'] for record in self.trace]


@dataclass
class GradientCache:
    """Phase-gradient building blocks at fixed (a, lam, chi).

    Matrices are N x N; per-user stacks carry a leading K axis. ``Xpow``
    is the phase derivative of the transmit power, used by the penalised
    surrogate only.
    """
    Dbar: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    X3: np.ndarray
    X4: np.ndarray
    X5: np.ndarray
    X6: np.ndarray
    Gmat: np.ndarray
    Gamma: np.ndarray
    S: np.ndarray
    Mmat: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    Y3: np.ndarray
    Y4: np.ndarray
    Y5: np.ndarray
    Xpow: np.ndarray
    CrT: np.ndarray
    weights: np.ndarray


def _refresh(model, phase, explicit=False):
    cov = effective_covariance(model, phase)
    ctx = variance_context(model, phase, explicit=explicit)
    return cov, ctx


def _weights(state):
    return np.abs(state.chi) ** 2, np.sqrt(1.0 + state.lam)


def surrogate_objective(state, model, cov=None, ctx=None, power_budget=None):
    """FP surrogate in nats.

    With ``power_budget`` the unit noise term is replaced by
    ``transmit_power / power_budget``, the penalised form the transform
    update maximises.
    """
    if cov is None or ctx is None:
        cov, ctx = _refresh(model, state.phase)
    A = state.A
    signal, interference, v = sinr_terms(A, cov, ctx)
    noise = 1.0
    if power_budget is not None:
        noise = transmit_power(A, cov.C) / power_budget
    w, s = _weights(state)
    terms = (np.log1p(state.lam) - state.lam
             + 2.0 * s * np.real(np.conj(state.chi) * signal)
             - w * (np.abs(signal) ** 2 + interference + v + noise))
    return math.fsum(terms)


def update_lambda(state, gammas):
    gammas = np.asarray(gammas, dtype=float)
    if np.any(gammas < 0):
        raise NumericalError("negative SINR passed to the lambda update")
    return gammas.copy()


def update_chi(state, cov, ctx):
    signal, interference, v = sinr_terms(state.A, cov, ctx)
    s = np.sqrt(1.0 + state.lam)
    return s * signal / (np.abs(signal) ** 2 + interference + v + 1.0)


def system_matrices(state, cov, ctx, penalty=None):
    """Hessian blocks S_k of the transform update.

    S_k = w_k (c_k c_k^H + J_k) + C_k^T kron (sum_j w_j C_j + penalty I).
    """
    C = cov.C
    K, M = C.shape[0], C.shape[-1]
    w, _ = _weights(state)
    J = ctx.J
    if J is None:
        J = np.array([explicit_J(ctx, k) for k in range(K)])
    c = cov.c
    weighted = np.einsum('k,kab->ab', w, C)
    if penalty:
        weighted = weighted + penalty * np.eye(M)
    blocks = []
    for k in range(K):
        S = w[k] * (np.outer(c[k], c[k].conj()) + J[k]) + np.kron(C[k].T, weighted)
        blocks.append(0.5 * (S + S.conj().T))
    return blocks


def _solve(S, rhs, jitter=False):
    if jitter:
        n = S.shape[0]
        S = S + 1e-10 * np.real(np.trace(S)) / n * np.eye(n)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', scipy.linalg.LinAlgWarning)
        try:
            x = scipy.linalg.solve(S, rhs, assume_a='her')
        except (scipy.linalg.LinAlgError, ValueError) as e:
            raise NumericalError("transform system is singular: %s" % e)
    for warning in caught:
        log.warning("ill-conditioned transform system: %s", warning.message)
    return x


def update_a_unconstrained(state, cov, ctx, P, jitter=False):
    """Closed-form transform update with the power folded into the objective."""
    if P <= 0:
        raise ValueError("power budget must be positive")
    if not np.any(state.chi):
        raise DegenerateStateError("every chi is zero; the transform system is singular")
    w, s = _weights(state)
    blocks = system_matrices(state, cov, ctx, penalty=np.sum(w) / P)
    c = cov.c
    a = np.zeros_like(c)
    for k, S in enumerate(blocks):
        if state.chi[k] == 0:
            continue
        a[k] = _solve(S, state.chi[k] * s[k] * c[k], jitter)
    return a


def _transforms_for(blocks, rhs, C, mu, jitter):
    M = C.shape[-1]
    eye = np.eye(M)
    a = np.zeros_like(rhs)
    for k, S in enumerate(blocks):
        if not np.any(rhs[k]):
            continue
        a[k] = _solve(S + mu * np.kron(C[k].T, eye), rhs[k], jitter)
    return a


def update_a_bisection(state, cov, ctx, P, jitter=False, return_multiplier=False):
    """Exact constrained transform update; the multiplier is found by bisection."""
    if P <= 0:
        raise ValueError("power budget must be positive")
    C = cov.C
    M = C.shape[-1]
    _, s = _weights(state)
    blocks = system_matrices(state, cov, ctx)
    rhs = (state.chi * s)[:, None] * cov.c

    def power(a):
        return transmit_power(unvec_stack(a, M), C)

    def done(a, mu):
        log.debug("bisection multiplier %g, power %g of %g", mu, power(a), P)
        return (a, mu) if return_multiplier else a

    try:
        a = _transforms_for(blocks, rhs, C, 0.0, jitter)
        if power(a) <= P:
            return done(a, 0.0)
    except NumericalError:
        pass

    w, _ = _weights(state)
    lo, hi = 0.0, (np.sum(w) / P) or 1.0
    a_hi = _transforms_for(blocks, rhs, C, hi, jitter)
    doublings = 0
    while power(a_hi) > P:
        doublings += 1
        if doublings > MAX_DOUBLINGS:
            raise BracketError("no multiplier bracket after %d doublings" % MAX_DOUBLINGS)
        lo, hi = hi, 2.0 * hi
        a_hi = _transforms_for(blocks, rhs, C, hi, jitter)

    for _ in range(MAX_BISECTIONS):
        if abs(power(a_hi) - P) <= BISECTION_RTOL * P:
            break
        mid = 0.5 * (lo + hi)
        a_mid = _transforms_for(blocks, rhs, C, mid, jitter)
        if power(a_mid) > P:
            lo = mid
        else:
            hi, a_hi = mid, a_mid
    else:
        if abs(power(a_hi) - P) > BISECTION_RTOL * P:
            log.warning("bisection stopped after %d steps short of the budget: power %.12g of %.12g",
                        MAX_BISECTIONS, power(a_hi), P)
    return done(a_hi, hi)


def scale_to_power(a, C, P, equality=False):
    """Common real scaling of every transform onto the power budget.

    By default the transforms are only scaled down when they exceed ``P``;
    ``equality=True`` always lands on the budget. ``C`` is a covariance
    set or a (K, M, M) stack.
    """
    C = getattr(C, 'C', C)
    M = C.shape[-1]
    current = transmit_power(unvec_stack(a, M), C)
    if current <= 0:
        return a
    if equality or current > P:
        return a * math.sqrt(P / current)
    return a


def equalize_power(a, chi, C, P):
    """Scale transforms onto the budget and chi by the inverse factor."""
    C = getattr(C, 'C', C)
    current = transmit_power(unvec_stack(a, C.shape[-1]), C)
    if current <= 0:
        return a, chi
    alpha = math.sqrt(P / current)
    return a * alpha, chi / alpha


def build_gradient_cache(model, state):
    M, K = model.M, model.K
    A = unvec_stack(state.a, M)
    AH = np.conj(np.swapaxes(A, -1, -2))
    w, s = _weights(state)
    chi, beta = state.chi, model.beta
    Tb, Rt, Rr, Cd = model.Tbar, model.Rtx, model.Rris, model.Cd
    TbH = Tb.conj().T

    CrT = np.swapaxes(model.Cr, -1, -2)
    Gamma = beta * Rr[None, :, :] * CrT
    S = Tb @ A @ TbH
    SH = np.conj(np.swapaxes(S, -1, -2))
    tra = np.einsum('ab,kba->k', Rt, A)
    Dbar = S * CrT + tra[:, None, None] * Gamma
    DbarH = np.conj(np.swapaxes(Dbar, -1, -2))
    tcd = np.einsum('kab,kba->k', Cd, A)

    X1 = np.einsum('k,kab->ab', s * np.conj(chi), Dbar) + np.einsum('k,kab->ab', s * chi, DbarH)
    X2 = np.abs(chi)[:, None, None] * Dbar
    X3 = np.einsum('k,kab->ab', w * np.conj(tcd), Dbar) + np.einsum('k,kab->ab', w * tcd, DbarH)

    ACdAH = A @ Cd @ AH
    ARtAH = A @ Rt @ AH
    AHRtA = AH @ Rt @ A
    AHA = AH @ A
    X4 = np.zeros_like(Gamma)
    for k in range(K):
        for j in range(K):
            X4[k] += (Tb @ AH[j] @ Cd[k] @ A[j] @ TbH) * CrT[j]
            X4[k] += np.trace(Cd[k] @ ARtAH[j]) * Gamma[j]
            X4[k] += (Tb @ ACdAH[j] @ TbH) * CrT[k]
            X4[k] += np.trace(Rt @ ACdAH[j]) * Gamma[k]

    Y2 = np.einsum('k,kab->ab', w, model.Cr)
    Y1 = np.einsum('k,kab->ab', w, Gamma)
    X5 = (Tb @ ARtAH @ TbH) * Y2.T[None, :, :]
    tr_rr = np.einsum('ab,kba->k', Rt, ARtAH)
    X6 = np.sum((Tb @ AHRtA @ TbH) * CrT, axis=0) + np.einsum('k,kab->ab', tr_rr, Gamma)
    tr_pow = np.einsum('ab,kba->k', Rt, AHA)
    Xpow = np.sum((Tb @ AHA @ TbH) * CrT, axis=0) + np.einsum('k,kab->ab', tr_pow, Gamma)
    Gmat = X1 - X3 - np.einsum('k,kab->ab', w, X4)

    phi = state.phase.phi
    B = phi[None, :, None] * model.Cr * phi.conj()[None, None, :]
    Btilde = phi[:, None] * Y2 * phi.conj()[None, :]
    Y3 = SH @ Btilde @ S
    Y4 = S @ B @ SH
    scalar = beta * beta * (np.abs(tra) ** 2 + tr_rr)
    Mmat = (scalar[:, None, None] * Rr[None, :, :]
            + beta * np.conj(tra)[:, None, None] * S + beta * tra[:, None, None] * SH
            + beta * (Tb @ ARtAH @ TbH) + beta * (Tb @ AHRtA @ TbH))
    Y5 = Rr @ B @ Mmat

    return GradientCache(Dbar=Dbar, X1=X1, X2=X2, X3=X3, X4=X4, X5=X5, X6=X6,
                         Gmat=Gmat, Gamma=Gamma, S=S, Mmat=Mmat, Y1=Y1, Y2=Y2,
                         Y3=Y3, Y4=Y4, Y5=Y5, Xpow=Xpow, CrT=CrT, weights=w)


def _ct(X):
    return np.conj(np.swapaxes(X, -1, -2))


def _quad(X, phi):
    return np.vdot(phi, X @ phi)


def phase_derivative(cache, phase, power_budget=None):
    """Wirtinger derivative of the surrogate with respect to conj(phi)."""
    phi = phase.phi
    c = cache
    delta = c.Gmat @ phi
    for k in range(c.X2.shape[0]):
        delta -= _quad(c.X2[k], phi) * (_ct(c.X2[k]) @ phi)
        delta -= _quad(_ct(c.X2[k]), phi) * (c.X2[k] @ phi)
        delta -= _quad(c.Gamma[k], phi) * (c.X5[k] @ phi)
        delta -= _quad(c.X5[k], phi) * (c.Gamma[k] @ phi)
        delta -= (c.Y3[k] * c.CrT[k]) @ phi
        delta -= (c.Y4[k] * c.Y2.T) @ phi
        delta -= c.weights[k] * ((c.Y5[k] * c.CrT[k]) @ phi)
        delta -= c.weights[k] * ((_ct(c.Y5[k]) * c.CrT[k]) @ phi)
    delta -= _quad(c.Y1, phi) * (c.X6 @ phi)
    delta -= _quad(c.X6, phi) * (c.Y1 @ phi)
    if power_budget is not None:
        delta -= np.sum(c.weights) / power_budget * (c.Xpow @ phi)
    return delta


def phase_gradient(cache, phase, power_budget=None):
    """Gradient of the phase-block objective with respect to the angles."""
    delta = phase_derivative(cache, phase, power_budget)
    return 2.0 * np.real(-1j * np.conj(phase.phi) * delta)


def armijo_ascent_step(phase, gradient, evaluate, kappa0=1.0, tau=0.5, c=1e-4,
                       max_backtracks=40, f_old=None, expand=False):
    """One backtracking ascent step along ``gradient``.

    Returns ``(phase, kappa)``; ``kappa`` is 0 when the gradient vanishes or
    no step was accepted, and the phase is then returned unchanged. With
    ``expand`` an accepted first trial is grown by ``1/tau`` for as long as
    the sufficient-increase test holds and the objective keeps improving,
    with no angle moving by more than pi.
    """
    gradient = np.asarray(gradient, dtype=float)
    if not np.all(np.isfinite(gradient)):
        raise NumericalError("non-finite phase gradient")
    norm2 = float(np.dot(gradient, gradient))
    if norm2 == 0.0:
        return phase, 0.0
    if f_old is None:
        f_old = evaluate(phase)
    if not math.isfinite(f_old):
        raise NumericalError("non-finite objective at the current phase")

    kappa = kappa0
    for _ in range(max_backtracks + 1):
        trial = phase.moved(kappa * gradient)
        f_new = evaluate(trial)
        if not math.isfinite(f_new):
            raise NumericalError("non-finite objective during the line search")
        if f_new >= f_old + c * kappa * norm2:
            if expand and kappa == kappa0:
                return _expand(phase, gradient, evaluate, trial, f_new, kappa, tau, c, f_old, norm2)
            return trial, kappa
        kappa *= tau
    log.debug("armijo stalled after %d backtracks", max_backtracks)
    return phase, 0.0



def _expand(phase, gradient, evaluate, best, f_best, kappa, tau, c, f_old, norm2):
    limit = math.pi / float(np.max(np.abs(gradient)))
    while kappa / tau <= limit:
        bigger = kappa / tau
        trial = phase.moved(bigger * gradient)
        f_new = evaluate(trial)
        if not math.isfinite(f_new):
            raise NumericalError("non-finite objective during the line search")
        if f_new < f_old + c * bigger * norm2 or f_new <= f_best:
            break
        best, f_best, kappa = trial, f_new, bigger
    log.debug("armijo step expanded to %g", kappa)
    return best, kappa


class AUpdateFactory(object):
    def factory(options):
        if options.a_update == 'closed-form':
            return ClosedFormUpdate(options)
        elif options.a_update == 'bisection':
            return BisectionUpdate(options)
        raise ValueError("unknown transform update '%s'" % options.a_update)

    factory = staticmethod(factory)


class AUpdateCommon(object):
    def __init__(self, options):
        self.options = options

    def update(self, state, cov, ctx, P):
        raise NotImplementedError

    def feasible(self, state, a, cov, P):
        """Bring (a, chi) back onto the budget after the update."""
        if self.options.power_scaling == 'equality':
            return equalize_power(a, state.chi, cov, P)
        return scale_to_power(a, cov, P), state.chi


class ClosedFormUpdate(AUpdateCommon):
    def update(self, state, cov, ctx, P):
        return update_a_unconstrained(state, cov, ctx, P, jitter=self.options.jitter)


class BisectionUpdate(AUpdateCommon):
    def update(self, state, cov, ctx, P):
        return update_a_bisection(state, cov, ctx, P, jitter=self.options.jitter)


class StatisticalDesign(object):
    """Runs the offline block coordinate ascent for one model and budget."""

    def __init__(self, model, P, options=None, rng=None, initial_phase=None):
        if P <= 0:
            raise ValueError("power budget must be positive")
        self.model = model
        self.P = float(P)
        self.options = options or OptimizerOptions()
        self.rng = rng if rng is not None else np.random.default_rng(self.options.seed)
        self.updater = AUpdateFactory.factory(self.options)
        self.penalised = self.options.power_scaling == 'equality'
        self.initial_phase = initial_phase
        # first trial step of the next line search
        self.kappa = self.options.armijo_kappa0

    @property
    def moves_phase(self):
        return self.options.optimize_phase and self.model.N > 0

    def initialize(self):
        model = self.model
        phase = self.initial_phase
        if phase is None:
            phase = PhaseState.random(model.N, self.rng)
        state = OptimizerState(lam=np.full(model.K, INITIAL_LAMBDA),
                               chi=np.full(model.K, INITIAL_CHI, dtype=complex),
                               a=np.zeros((model.K, model.M * model.M), dtype=complex),
                               phase=phase)
        cov, ctx = _refresh(model, phase, explicit=True)
        a = self.updater.update(state, cov, ctx, self.P)
        a, chi = self.updater.feasible(state, a, cov, self.P)
        return state.replace(a=a, chi=chi)

    def transform_block(self, state):
        cov, ctx = _refresh(self.model, state.phase, explicit=True)
        gammas = sinr_lower_bound(state.A, cov, ctx)
        state = state.replace(lam=update_lambda(state, gammas))
        state = state.replace(chi=update_chi(state, cov, ctx))
        try:
            a = self.updater.update(state, cov, ctx, self.P)
        except DegenerateStateError:
            log.warning("degenerate chi, reinitialising")
            state = state.replace(chi=np.full(self.model.K, INITIAL_CHI, dtype=complex))
            a = self.updater.update(state, cov, ctx, self.P)
        a, chi = self.updater.feasible(state, a, cov, self.P)
        return state.replace(a=a, chi=chi)

    def evaluate_phase(self, state, power_budget):
        def evaluate(phase):
            return surrogate_objective(state.replace(phase=phase), self.model,
                                       power_budget=power_budget)
        return evaluate

    def phase_block(self, state):
        if not self.moves_phase:
            return state, 0.0, 0.0
        options = self.options
        budget = self.P if self.penalised else None
        evaluate = self.evaluate_phase(state, budget)
        kappa, grad_norm = 0.0, 0.0
        for step in range(options.inner_steps):
            cache = build_gradient_cache(self.model, state)
            gradient = phase_gradient(cache, state.phase, budget)
            if step == 0:
                grad_norm = float(np.linalg.norm(gradient))
            phase, kappa = armijo_ascent_step(
                state.phase, gradient, evaluate, kappa0=self.kappa,
                tau=options.armijo_tau, c=options.armijo_c,
                max_backtracks=options.armijo_max_backtracks,
                expand=options.armijo_adaptive)
            if kappa == 0.0:
                break
            if options.armijo_adaptive:
                self.kappa = kappa
            state = state.replace(phase=phase)
        cov = effective_covariance(self.model, state.phase)
        if self.penalised:
            a, chi = equalize_power(state.a, state.chi, cov, self.P)
            state = state.replace(a=a, chi=chi)
        else:
            state = state.replace(a=scale_to_power(state.a, cov, self.P))
        return state, kappa, grad_norm

    def record(self, state, sweep, kappa, grad_norm):
        cov, ctx = _refresh(self.model, state.phase)
        gammas = sinr_lower_bound(state.A, cov, ctx)
        entry = dict(sweep=sweep,
                     surrogate=surrogate_objective(state, self.model, cov, ctx),
                     rate=sum_rate_lower_bound(gammas),
                     kappa=kappa,
                     grad_norm=grad_norm,
                     power=transmit_power(state.A, cov.C))
        log.debug("sweep %d: rate %.12g surrogate %.12g kappa %g |g| %g power %g",
                  sweep, entry['rate'], entry['surrogate'], kappa, grad_norm, entry['power'])
        return entry

    def sweep(self, state, index):
        state = self.transform_block(state)
        state, kappa, grad_norm = self.phase_block(state)
        state.trace.append(self.record(state, index, kappa, grad_norm))
        return state

    def check(self, state):
        rates = state.rates
        if len(rates) < 2:
            return
        previous, current = rates[-2], rates[-1]
        if current < previous - MONOTONE_ATOL:
            msg = "lower-bound sum-rate decreased from %.15g to %.15g at sweep %d" % (
                previous, current, len(rates))
            if self.options.check_monotone:
                raise ConsistencyError(msg)
            log.warning(msg)
        power = state.trace[-1]['power']
        if power > self.P * (1.0 + 1e-9):
            raise ConsistencyError("transmit power %g exceeds budget %g" % (power, self.P))

    def converged(self, state):
        rates = state.rates
        if len(rates) < 2:
            return False
        previous, current = rates[-2], rates[-1]
        return abs(current - previous) <= self.options.tol * max(abs(previous), 1e-12)

    def run(self):
        state = self.initialize()
        for index in range(1, self.options.max_iter + 1):
            state = self.sweep(state, index)
            state.iterations = index
            self.check(state)
            if self.converged(state):
                state.converged = True
                break
        log.info("design finished after %d sweeps (converged=%s, rate %.6g bpcu)",
                 state.iterations, state.converged, state.rates[-1])
        return state


def optimize(model, P, options=None, rng=None, initial_phase=None):
    if initial_phase is not None and initial_phase.N != model.N:
        raise DimensionError("initial phase has %d elements, model has N=%d" % (initial_phase.N, model.N))
    return StatisticalDesign(model, P, options, rng, initial_phase).run()

