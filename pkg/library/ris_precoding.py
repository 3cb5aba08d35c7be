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

"""Per coherence interval precoding.

Channels are stacked as a (K, M) array whose row k is h_k; user k sees
h_k^H sum_j p_j s_j plus unit-power noise.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize

from library.ris_common import (
    ConsistencyError, DimensionError, NumericalError, RankDeficientError,
    validate_params,
)
from library.ris_statistics import transmit_power

log = logging.getLogger(__name__)

RANK_RTOL = 1e-10

ONLINE_ARGUMENT_SPEC = dict(
    online_tol=dict(type='float', default=1e-8),
    online_max_iter=dict(type='int', default=100),
    warm_start=dict(type='bool', default=False),
    strict_power=dict(type='bool', default=False),
)


@dataclass
class OnlineOptions:
    tol: float = 1e-8
    max_iter: int = 100
    warm_start: bool = False
    strict_power: bool = False

    @classmethod
    def from_params(cls, params):
        values = validate_params(ONLINE_ARGUMENT_SPEC, params)
        return cls(tol=values['online_tol'], max_iter=values['online_max_iter'],
                   warm_start=values['warm_start'], strict_power=values['strict_power'])


@dataclass
class TransformSet:
    """Statistical-CSI filters A_k, with the budget their design assumed."""
    A: np.ndarray
    power_budget: float

    @classmethod
    def from_state(cls, state, power_budget):
        return cls(A=state.A, power_budget=float(power_budget))

    @property
    def K(self):
        return self.A.shape[0]

    def expected_power(self, C):
        """E sum_k ||A_k h_k||^2 = sum_k tr(A_k C_k A_k^H)."""
        return transmit_power(self.A, getattr(C, 'C', C))


@dataclass
class PrecoderSet:
    p: np.ndarray
    power_budget: float
    gains: Optional[np.ndarray] = None
    powers: Optional[np.ndarray] = None
    water_level: Optional[float] = None
    condition_number: Optional[float] = None
    trace: List[float] = field(default_factory=list)

    @property
    def total_power(self):
        return float(np.real(np.vdot(self.p, self.p)))

    @property
    def iterations(self):
        return max(len(self.trace) - 1, 0)


def _check_channels(h):
    h = np.asarray(h)
    if h.ndim != 2:
        raise DimensionError("channels must be a (K, M) array, got shape %s" % (h.shape,))
    return h


def bilinear_precode(transforms, sample, strict_power=False):
    """p_k = A_k h_k.

    The budget holds in expectation only. ``strict_power`` rescales every
    draw onto the budget instead.
    """
    h = _check_channels(sample.h)
    A = transforms.A
    if A.shape[:2] != (h.shape[0], h.shape[1]):
        raise DimensionError("transforms %s do not match channels %s" % (A.shape, h.shape))
    p = np.einsum('kmn,kn->km', A, h)
    if strict_power:
        total = float(np.real(np.vdot(p, p)))
        if total > 0:
            p = p * math.sqrt(transforms.power_budget / total)
    return PrecoderSet(p=p, power_budget=transforms.power_budget)


def _cross_gains(h, p):
    """G[k, j] = h_k^H p_j."""
    return h.conj() @ p.T


def instantaneous_rate(h, p):
    h = _check_channels(h)
    p = np.asarray(p)
    if p.shape != h.shape:
        raise DimensionError("precoders %s do not match channels %s" % (p.shape, h.shape))
    G = np.abs(_cross_gains(h, p)) ** 2
    signal = np.diag(G)
    interference = G.sum(axis=1) - signal
    return math.fsum(np.log2(1.0 + signal / (interference + 1.0)))


def matched_filters(h, P):
    """Matched filters sharing the budget equally."""
    h = _check_channels(h)
    norms = np.linalg.norm(h, axis=1)
    p = np.zeros_like(h)
    active = norms > 0
    p[active] = h[active] / norms[active, None] * math.sqrt(P / h.shape[0])
    return p


def _onto_budget(p, P):
    total = float(np.real(np.vdot(p, p)))
    if total <= 0:
        return p
    return p * math.sqrt(P / total)


def instantaneous_fp_bcd(h, P, options=None, initial=None):
    """Sum-rate maximisation on instantaneous channels.

    Same quadratic-transform iteration as the statistical design, with the
    budget folded into the precoder update and the result scaled back onto
    ``P``; the rate trace is nondecreasing.
    """
    h = _check_channels(h)
    if P <= 0:
        raise ValueError("power budget must be positive")
    options = options or OnlineOptions()
    K, M = h.shape
    p = matched_filters(h, P) if initial is None else _onto_budget(np.array(initial, dtype=complex), P)
    trace = [instantaneous_rate(h, p)]
    eye = np.eye(M)

    for _ in range(options.max_iter):
        G = _cross_gains(h, p)
        signal = np.diag(G)
        total = np.sum(np.abs(G) ** 2, axis=1)
        gamma = np.abs(signal) ** 2 / (total - np.abs(signal) ** 2 + 1.0)
        s = np.sqrt(1.0 + gamma)
        chi = s * signal / (total + 1.0)
        w = np.abs(chi) ** 2
        if not np.any(chi):
            break
        system = np.einsum('k,ka,kb->ab', w, h, h.conj()) + np.sum(w) / P * eye
        try:
            raw = scipy.linalg.solve(system, (h * (s * chi)[:, None]).T, assume_a='her').T
        except scipy.linalg.LinAlgError as e:
            raise NumericalError("precoder system is singular: %s" % e)
        p = _onto_budget(raw, P)
        trace.append(instantaneous_rate(h, p))
        if trace[-1] < trace[-2] - 1e-9:
            raise ConsistencyError("online rate decreased from %.15g to %.15g" % (trace[-2], trace[-1]))
        if abs(trace[-1] - trace[-2]) <= options.tol * max(abs(trace[-2]), 1e-12):
            break
    return PrecoderSet(p=p, power_budget=P, trace=trace)


def waterfill(gains, P) -> Tuple[np.ndarray, float]:
    """Optimal powers and water level for parallel channels of power ``gains``."""
    gains = np.asarray(gains, dtype=float)
    powers = np.zeros_like(gains)
    usable = gains > 0
    if P <= 0 or not np.any(usable):
        return powers, 0.0
    floor = np.full_like(gains, np.inf)
    floor[usable] = 1.0 / gains[usable]

    def excess(level):
        return np.sum(np.clip(level - floor[usable], 0.0, None)) - P

    lo = np.min(floor)
    level = scipy.optimize.brentq(excess, lo, lo + P, xtol=1e-14 * (lo + P))
    active = floor < level
    while True:
        level = (P + np.sum(floor[active])) / np.count_nonzero(active)
        updated = floor < level
        if np.array_equal(updated, active):
            break
        active = updated
    powers[active] = level - floor[active]
    return powers, float(level)


def _dependent_users(G):
    basis = scipy.linalg.null_space(G.conj().T, rcond=RANK_RTOL)
    if basis.size == 0:
        return tuple(range(G.shape[0]))
    return tuple(int(k) for k in np.nonzero(np.max(np.abs(basis), axis=1) > 1e-8)[0])


def zf_waterfilling(h, P):
    h = _check_channels(h)
    K, M = h.shape
    if K > M:
        raise DimensionError("zero-forcing needs K <= M, got K=%d M=%d" % (K, M))
    G = h.conj()
    singular = scipy.linalg.svdvals(G)
    if singular[0] == 0 or singular[-1] <= RANK_RTOL * singular[0]:
        users = _dependent_users(G)
        raise RankDeficientError("channel matrix is rank deficient over users %s" % (users,), users)
    condition = float(singular[0] / singular[-1])
    V = scipy.linalg.pinv(G)
    norms = np.linalg.norm(V, axis=0)
    U = V / norms
    gains = 1.0 / norms ** 2
    powers, level = waterfill(gains, P)
    p = (U * np.sqrt(powers)).T
    log.debug("zf: condition number %g, water level %g", condition, level)
    return PrecoderSet(p=p, power_budget=P, gains=gains, powers=powers,
                       water_level=level, condition_number=condition)
