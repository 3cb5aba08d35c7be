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

"""Long-term channel statistics and channel realisations.

The BS sits at the origin, the RIS at ``ris_position`` and the users are
dropped in a disc. Every covariance matrix comes out of a clustered
multipath model: ``n_path`` clusters of ``n_ray`` rays, each ray a ULA
steering vector, weighted by the cluster power and scaled by the distance
dependent path loss of the link.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from library.ris_common import (
    ConfigError, DimensionError, DomainError, ModelError,
    check_hermitian_psd, crandn, psd_sqrt, repair_psd, validate_params,
)

log = logging.getLogger(__name__)

USER_LAYOUTS = ['disc', 'axis']
CLUSTER_HALF_WIDTH = np.pi / 3
RAY_HALF_SPREAD = np.deg2rad(2.0)

SCENARIO_ARGUMENT_SPEC = dict(
    M=dict(type='int', default=8),
    N=dict(type='int', default=16),
    K=dict(type='int', default=3),
    D=dict(type='float', default=30.0),
    user_radius=dict(type='float', default=50.0),
    ris_position=dict(type='list', elements='float', default=[50.0, 10.0]),
    beta=dict(type='float', default=0.2),
    n_path=dict(type='int', default=6),
    n_ray=dict(type='int', default=20),
    seed=dict(type='int', default=0),
    min_distance=dict(type='float', default=1.0),
    user_layout=dict(default='disc', choices=USER_LAYOUTS),
    los=dict(type='bool', default=True),
)


@dataclass
class ScenarioConfig:
    M: int = 8
    N: int = 16
    K: int = 3
    D: float = 30.0
    user_radius: float = 50.0
    ris_position: Sequence[float] = (50.0, 10.0)
    beta: float = 0.2
    n_path: int = 6
    n_ray: int = 20
    seed: int = 0
    min_distance: float = 1.0
    user_layout: str = 'disc'
    los: bool = True

    @classmethod
    def from_params(cls, params):
        values = validate_params(SCENARIO_ARGUMENT_SPEC, params)
        values['ris_position'] = tuple(values['ris_position'])
        config = cls(**values)
        config.validate()
        return config

    def validate(self, zero_forcing=False):
        if self.M < 1 or self.K < 1:
            raise ConfigError("M and K must be positive, got M=%d K=%d" % (self.M, self.K))
        if self.N < 0:
            raise ConfigError("N must be nonnegative, got %d" % self.N)
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta must lie in [0, 1], got %g" % self.beta)
        if self.n_path < 1 or self.n_ray < 1:
            raise ConfigError("n_path and n_ray must be at least 1")
        if self.user_radius < 0 or self.min_distance <= 0:
            raise ConfigError("user_radius must be >= 0 and min_distance > 0")
        if len(self.ris_position) != 2:
            raise ConfigError("ris_position needs two coordinates")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.user_layout not in USER_LAYOUTS:
            raise ConfigError("user_layout must be one of %s" % ', '.join(USER_LAYOUTS))
        if zero_forcing and self.M < self.K:
            raise ConfigError("zero-forcing needs M >= K, got M=%d K=%d" % (self.M, self.K))
        return self

    def as_params(self):
        params = dict((k, getattr(self, k)) for k in SCENARIO_ARGUMENT_SPEC)
        params['ris_position'] = list(self.ris_position)
        return params


@dataclass
class LinkGeometry:
    """Cluster description of one link.

    ``angles`` (n_path x n_ray, radians) and ``powers`` (n_path) are drawn
    by ``synthesize_covariance`` when left unset.
    """
    gain: float
    n_path: int = 6
    n_ray: int = 20
    angles: Optional[np.ndarray] = None
    powers: Optional[np.ndarray] = None

    @classmethod
    def from_distance(cls, distance, n_path, n_ray, min_distance=1.0):
        return cls(gain=pathloss_db_to_linear(max(distance, min_distance)),
                   n_path=n_path, n_ray=n_ray)


@dataclass
class StatisticalModel:
    Cd: np.ndarray
    Cr: np.ndarray
    Rris: np.ndarray
    Rtx: np.ndarray
    Tbar: np.ndarray
    beta: float
    positions: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def M(self):
        return self.Rtx.shape[0]

    @property
    def N(self):
        return self.Rris.shape[0]

    @property
    def K(self):
        return self.Cd.shape[0]

    @cached_property
    def sqrt_factors(self):
        """PSD square roots (Cd, Cr, Rris, Rtx), computed once per model."""
        return (np.array([psd_sqrt(c) for c in self.Cd]).reshape(self.Cd.shape),
                np.array([psd_sqrt(c) for c in self.Cr]).reshape(self.Cr.shape),
                psd_sqrt(self.Rris),
                psd_sqrt(self.Rtx))

    def validate(self):
        M, N, K = self.M, self.N, self.K
        if self.Cd.shape != (K, M, M):
            raise DimensionError("Cd must be (%d, %d, %d), got %s" % (K, M, M, self.Cd.shape))
        if self.Cr.shape != (K, N, N):
            raise DimensionError("Cr must be (%d, %d, %d), got %s" % (K, N, N, self.Cr.shape))
        if self.Tbar.shape != (N, M):
            raise DimensionError("Tbar must be (%d, %d), got %s" % (N, M, self.Tbar.shape))
        if not 0.0 <= self.beta <= 1.0:
            raise ModelError("beta must lie in [0, 1], got %g" % self.beta)
        for k in range(K):
            check_hermitian_psd(self.Cd[k], 'Cd[%d]' % k)
            check_hermitian_psd(self.Cr[k], 'Cr[%d]' % k)
        check_hermitian_psd(self.Rris, 'Rris')
        check_hermitian_psd(self.Rtx, 'Rtx')
        return self

    def without_ris(self):
        """Same model with every RIS-user channel switched off (Cr = 0)."""
        return StatisticalModel(Cd=self.Cd, Cr=np.zeros_like(self.Cr), Rris=self.Rris,
                                Rtx=self.Rtx, Tbar=self.Tbar, beta=self.beta,
                                positions=self.positions)


@dataclass
class ChannelSample:
    """One realisation, or a batch of them when arrays carry a leading axis."""
    hd: np.ndarray
    r: np.ndarray
    W: np.ndarray
    T: np.ndarray
    h: np.ndarray
    phi: np.ndarray

    def assembled(self):
        """Recompute h = hd + T^H diag(phi) r from the stored parts."""
        q = self.phi * self.r
        return self.hd + np.einsum('...nm,...kn->...km', self.T.conj(), q)

    def __len__(self):
        return self.h.shape[0] if self.h.ndim == 3 else 1

    def __getitem__(self, index):
        if self.h.ndim != 3:
            raise IndexError("not a batched sample")
        return ChannelSample(hd=self.hd[index], r=self.r[index], W=self.W[index],
                             T=self.T[index], h=self.h[index], phi=self.phi)


def steering_vector(angle, length):
    """ULA response with half-wavelength spacing: exp(j pi m sin(angle))."""
    if length < 1:
        raise DimensionError("steering vector length must be >= 1, got %d" % length)
    angle = np.asarray(angle, dtype=float)
    m = np.arange(length)
    return np.exp(1j * np.pi * np.multiply.outer(np.sin(angle), m))


def pathloss_db_to_linear(distance):
    if distance <= 0:
        raise DomainError("distance must be positive, got %g" % distance)
    return 10.0 ** ((78.7 - 37.6 * np.log10(distance)) / 10.0)


def synthesize_covariance(geometry, dims, rng):
    if dims < 1:
        raise DimensionError("covariance dimension must be >= 1, got %d" % dims)
    angles = geometry.angles
    if angles is None:
        centers = rng.uniform(-CLUSTER_HALF_WIDTH, CLUSTER_HALF_WIDTH, geometry.n_path)
        offsets = rng.uniform(-RAY_HALF_SPREAD, RAY_HALF_SPREAD, (geometry.n_path, geometry.n_ray))
        angles = centers[:, None] + offsets
    angles = np.asarray(angles, dtype=float).reshape(geometry.n_path, geometry.n_ray)

    powers = geometry.powers
    if powers is None:
        # (0, 1] draws, normalised to unit total power
        powers = 1.0 - rng.random(geometry.n_path)
        powers = powers / np.sum(powers)
    powers = np.asarray(powers, dtype=float).reshape(geometry.n_path)
    if np.any(powers <= 0):
        raise DomainError("cluster powers must be positive")

    x = steering_vector(angles, dims)
    weights = powers[:, None] / geometry.n_ray
    c = geometry.gain * np.einsum('pr,pri,prj->ij', weights, x, x.conj())
    return repair_psd(c)


def user_positions(config, rng):
    center = np.array([config.D, 0.0])
    if config.user_layout == 'axis':
        return np.tile(center, (config.K, 1))
    radius = config.user_radius * np.sqrt(rng.random(config.K))
    theta = rng.uniform(0.0, 2.0 * np.pi, config.K)
    return center + np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)


def build_statistical_model(config, rng):
    config.validate()
    M, N, K = config.M, config.N, config.K
    ris = np.asarray(config.ris_position, dtype=float)
    positions = user_positions(config, rng)

    Cd = np.empty((K, M, M), dtype=complex)
    for k in range(K):
        link = LinkGeometry.from_distance(np.linalg.norm(positions[k]), config.n_path,
                                          config.n_ray, config.min_distance)
        Cd[k] = synthesize_covariance(link, M, rng)
    Rtx = synthesize_covariance(LinkGeometry(1.0, config.n_path, config.n_ray), M, rng)

    Cr = np.zeros((K, N, N), dtype=complex)
    Rris = np.zeros((N, N), dtype=complex)
    Tbar = np.zeros((N, M), dtype=complex)
    if N > 0:
        bs_ris = max(np.linalg.norm(ris), config.min_distance)
        gain_t = pathloss_db_to_linear(bs_ris)
        Rris = synthesize_covariance(LinkGeometry(gain_t, config.n_path, config.n_ray), N, rng)
        for k in range(K):
            link = LinkGeometry.from_distance(np.linalg.norm(positions[k] - ris), config.n_path,
                                              config.n_ray, config.min_distance)
            Cr[k] = synthesize_covariance(link, N, rng)
        if config.los and config.beta < 1.0:
            # both arrays lie along the x axis, so the LoS ray leaves and
            # arrives at the same angle off broadside
            theta = np.arctan2(ris[1], ris[0])
            t_prime = np.sqrt(gain_t) * np.outer(steering_vector(theta, N),
                                                 steering_vector(theta, M).conj())
            Tbar = np.sqrt(1.0 - config.beta) * t_prime

    model = StatisticalModel(Cd=Cd, Cr=Cr, Rris=Rris, Rtx=Rtx, Tbar=Tbar,
                             beta=config.beta, positions=positions)
    log.debug("built model M=%d N=%d K=%d beta=%g", M, N, K, config.beta)
    return model.validate()


def sample_channel(model, phase, rng, size=None):
    """Draw channel realisations for the RIS configuration ``phase``.

    Direct channels are drawn first, then the RIS-user channels, then W,
    so models differing only on the RIS side share their direct channels
    under equal seeds.
    """
    M, N, K = model.M, model.N, model.K
    phi = np.asarray(phase.phi)
    if phi.shape != (N,):
        raise DimensionError("phase has %d elements, model has N=%d" % (phi.shape[0], N))
    count = 1 if size is None else int(size)
    cd_sqrt, cr_sqrt, rris_sqrt, rtx_sqrt = model.sqrt_factors

    hd = np.einsum('kmn,skn->skm', cd_sqrt, crandn(rng, (count, K, M)))
    r = np.einsum('kab,skb->ska', cr_sqrt, crandn(rng, (count, K, N)))
    W = crandn(rng, (count, N, M))
    T = model.Tbar + np.sqrt(model.beta) * (rris_sqrt @ W @ rtx_sqrt.conj().T)
    h = hd + np.einsum('snm,skn->skm', T.conj(), phi * r)

    if size is None:
        return ChannelSample(hd=hd[0], r=r[0], W=W[0], T=T[0], h=h[0], phi=phi)
    return ChannelSample(hd=hd, r=r, W=W, T=T, h=h, phi=phi)
