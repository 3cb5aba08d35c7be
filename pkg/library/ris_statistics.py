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

"""Closed-form second and fourth order statistics of the effective channel.

All transforms are handled in column-stacked form, a_k = vec(A_k), so that
the Kronecker quadratic forms reduce to traces:

    c_k^H a_k                 = tr(C_k A_k)
    a_j^H (C_j^T kron C_k) a_j = tr(C_k A_j C_j A_j^H)
    a_k^H (C_k^T kron I) a_k   = tr(A_k C_k A_k^H)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from library.ris_common import DimensionError, DomainError, NumericalError, herm, unvec, vec, vec_stack

log = logging.getLogger(__name__)

NEGATIVE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class PhaseState:
    """RIS configuration stored as angles; phi is always exp(j * angles)."""
    angles: np.ndarray
    phi: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float).reshape(-1)
        object.__setattr__(self, 'angles', angles)
        object.__setattr__(self, 'phi', np.exp(1j * angles))

    @classmethod
    def random(cls, n, rng):
        return cls(rng.uniform(0.0, 2.0 * np.pi, n))

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n))

    @property
    def N(self):
        return self.angles.shape[0]

    @property
    def Phi(self):
        return np.diag(self.phi)

    def moved(self, step):
        return PhaseState(self.angles + step)

    def rotated(self, theta):
        """Common phase rotation of every element."""
        return PhaseState(self.angles + theta)


@dataclass
class EffectiveCovarianceSet:
    C: np.ndarray
    phase: PhaseState

    @property
    def K(self):
        return self.C.shape[0]

    @property
    def c(self):
        """Column-stacked covariances, one row per user."""
        return vec_stack(self.C)


@dataclass
class VarianceContext:
    """Fourth-order variance terms of every user.

    ``Q[k] = B_k Rris B_k`` with ``B_k = Phi Cr[k] Phi^H``; ``X[k]`` is
    ``Tbar^H Q[k] Tbar``. ``J`` holds the dense M^2 x M^2 matrices when the
    context was built with ``explicit=True``; ``apply_J`` and
    ``quadratic`` never need them.
    """
    Q: np.ndarray
    X: np.ndarray
    trace_q: np.ndarray
    Rtx: np.ndarray
    beta: float
    J: Optional[np.ndarray] = None

    @property
    def K(self):
        return self.Q.shape[0]

    def apply_J(self, k, a):
        """Matrix-free J_k a."""
        M = self.Rtx.shape[0]
        A = unvec(a, M)
        R, X, b = self.Rtx, self.X[k], self.beta
        tau = np.trace(R @ A)
        out = b * b * self.trace_q[k] * (tau * R + R @ A @ R)
        out = out + b * (np.trace(X @ A) * R + tau * X)
        out = out + b * (X @ A @ R + R @ A @ X)
        return vec(out)

    def quadratic(self, k, A):
        """a_k^H J_k a_k evaluated through traces of the M x M transform."""
        R, X, b = self.Rtx, self.X[k], self.beta
        if b == 0.0:
            return 0.0
        tau = np.trace(R @ A)
        ah = A.conj().T
        value = b * b * self.trace_q[k] * (abs(tau) ** 2 + np.trace(R @ A @ R @ ah))
        value = value + 2.0 * b * np.real(np.conj(tau) * np.trace(X @ A))
        value = value + b * np.trace(ah @ X @ A @ R) + b * np.trace(ah @ R @ A @ X)
        return float(np.real(value))


def _check_phase(model, phase):
    if phase.N != model.N:
        raise DimensionError("phase has %d elements, model has N=%d" % (phase.N, model.N))


def reflected_covariances(model, phase):
    """B_k = Phi Cr[k] Phi^H for every user."""
    phi = phase.phi
    return phi[None, :, None] * model.Cr * phi.conj()[None, None, :]


def reflection_power(model, phase):
    """phi^H (Rris . Cr[k]^T) phi = tr(Rris B_k), real and nonnegative."""
    B = reflected_covariances(model, phase)
    values = np.einsum('ij,kji->k', model.Rris, B)
    return np.real(values)


def effective_covariance(model, phase):
    _check_phase(model, phase)
    B = reflected_covariances(model, phase)
    tbar = model.Tbar
    cascade = np.einsum('nm,knl,lp->kmp', tbar.conj(), B, tbar)
    scale = model.beta * reflection_power(model, phase)
    C = model.Cd + cascade + scale[:, None, None] * model.Rtx[None, :, :]
    return EffectiveCovarianceSet(C=herm(C), phase=phase)


def gaussian_fourth_moment(C, M1, M2):
    """E[u^H M1 u u^H M2 u] for u ~ CN(0, C)."""
    C, M1, M2 = np.asarray(C), np.asarray(M1), np.asarray(M2)
    if not (C.shape == M1.shape == M2.shape) or C.shape[0] != C.shape[-1]:
        raise DimensionError("gaussian_fourth_moment needs equal square matrices")
    return np.trace(C @ M1 @ C @ M2) + np.trace(C @ M1) * np.trace(C @ M2)


def variance_context(model, phase, explicit=True):
    _check_phase(model, phase)
    B = reflected_covariances(model, phase)
    Q = B @ model.Rris[None, :, :] @ B
    tbar = model.Tbar
    X = herm(np.einsum('nm,knl,lp->kmp', tbar.conj(), Q, tbar))
    trace_q = np.real(np.einsum('kij,ji->k', Q, model.Rris))
    ctx = VarianceContext(Q=Q, X=X, trace_q=trace_q, Rtx=model.Rtx, beta=model.beta)
    if explicit:
        ctx.J = np.array([explicit_J(ctx, k) for k in range(model.K)])
    return ctx


def explicit_J(ctx, k):
    R, X, b = ctx.Rtx, ctx.X[k], ctx.beta
    r, x = vec(R), vec(X)
    J = b * b * ctx.trace_q[k] * (np.outer(r, r.conj()) + np.kron(R.T, R))
    J = J + b * (np.outer(r, x.conj()) + np.outer(x, r.conj()))
    J = J + b * np.kron(R.T, X) + b * np.kron(X.T, R)
    return herm(J)


def _clip(value, scale, what):
    if value >= 0:
        return value
    if value >= -NEGATIVE_RTOL * max(scale, np.finfo(float).tiny):
        return 0.0
    raise NumericalError("%s is negative beyond round-off: %g" % (what, value))


def variance_of_useful_signal(a_k, ctx, C_k, k=0):
    """var(h_k^H A_k h_k) = a^H J_k a + tr(A C A^H C)."""
    M = C_k.shape[0]
    a_k = np.asarray(a_k)
    if a_k.shape != (M * M,):
        raise DimensionError("a_k must have %d entries" % (M * M))
    A = a_k.reshape(M, M, order='F')
    if ctx.J is not None:
        v_j = float(np.real(np.vdot(a_k, ctx.J[k] @ a_k)))
    else:
        v_j = ctx.quadratic(k, A)
    v_g = float(np.real(np.trace(A @ C_k @ A.conj().T @ C_k)))
    return _clip(v_j + v_g, max(abs(v_j), abs(v_g)), 'variance')


def interference_matrix(A, C):
    """I[k, j] = a_j^H (C_j^T kron C_k) a_j = tr(C_k A_j C_j A_j^H)."""
    P = A @ C @ np.conj(np.swapaxes(A, -1, -2))
    return np.real(np.einsum('kab,jba->kj', C, P))


def useful_signal(A, C):
    """c_k^H a_k = tr(C_k A_k) per user."""
    return np.einsum('kab,kba->k', C, A)


def transmit_power(A, C):
    """Sum_k a_k^H (C_k^T kron I) a_k = Sum_k tr(A_k C_k A_k^H)."""
    return float(np.real(np.einsum('kab,kbc,kac->', A, C, A.conj())))


def variance_terms(A, ctx):
    """a_k^H J_k a_k for every user."""
    if ctx.J is not None:
        a = vec_stack(A)
        values = np.real(np.einsum('ki,kij,kj->k', a.conj(), ctx.J, a))
    else:
        values = np.array([ctx.quadratic(k, A[k]) for k in range(A.shape[0])])
    return np.clip(values, 0.0, None)


def sinr_terms(A, cov, ctx):
    """Numerator, interference-plus-variance and J-variance of every user."""
    C = cov.C
    if A.shape != C.shape:
        raise DimensionError("transforms %s do not match covariances %s" % (A.shape, C.shape))
    signal = useful_signal(A, C)
    interference = interference_matrix(A, C).sum(axis=1)
    v = variance_terms(A, ctx)
    return signal, interference, v


def sinr_lower_bound(a, cov, ctx):
    """Per-user lower-bound SINR.

    ``a`` is either the (K, M*M) stack of column-stacked transforms or the
    (K, M, M) stack of matrices.
    """
    a = np.asarray(a)
    M = cov.C.shape[-1]
    A = a if a.ndim == 3 else np.swapaxes(a.reshape(a.shape[0], M, M), -1, -2)
    signal, interference, v = sinr_terms(A, cov, ctx)
    numerator = np.abs(signal) ** 2
    return numerator / (interference + v + 1.0)


def sum_rate_lower_bound(gammas):
    gammas = np.asarray(gammas, dtype=float)
    if np.any(gammas < 0):
        raise DomainError("SINR values must be nonnegative")
    return math.fsum(np.log2(1.0 + gammas))
