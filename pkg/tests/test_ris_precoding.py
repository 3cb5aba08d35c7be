# Test the ris_precoding module
#
# Usage:
#
#    python -m pytest tests/test_ris_precoding.py
#

import math
import unittest

import numpy as np
import scipy.optimize
from numpy.testing import assert_allclose

from library.ris_channel import ChannelSample, ScenarioConfig, build_statistical_model, sample_channel
from library.ris_common import DimensionError, RankDeficientError, crandn
from library.ris_precoding import (
    OnlineOptions, TransformSet, bilinear_precode, instantaneous_fp_bcd,
    instantaneous_rate, matched_filters, waterfill, zf_waterfilling,
)
from library.ris_optimizer import OptimizerOptions, optimize
from library.ris_statistics import (
    effective_covariance, sinr_lower_bound, sum_rate_lower_bound, variance_context,
)


def sample_of(h):
    return ChannelSample(hd=h, r=np.zeros((h.shape[0], 0)), W=np.zeros((0, h.shape[1])),
                         T=np.zeros((0, h.shape[1])), h=h, phi=np.zeros(0))


class TestRate(unittest.TestCase):
    def test_orthogonal_users(self):
        h = np.eye(2, dtype=complex)
        p = np.array([[2.0, 0.0], [0.0, 1.0]], dtype=complex)
        assert_allclose(instantaneous_rate(h, p), math.log2(5.0) + 1.0)

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            instantaneous_rate(np.ones((2, 3)), np.ones((2, 2)))


class TestBilinear(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.A = crandn(rng, (2, 3, 3))
        self.h = crandn(rng, (2, 3))

    def test_applies_transforms(self):
        p = bilinear_precode(TransformSet(self.A, 1.0), sample_of(self.h)).p
        for k in range(2):
            assert_allclose(p[k], self.A[k] @ self.h[k])

    def test_strict_power(self):
        result = bilinear_precode(TransformSet(self.A, 4.0), sample_of(self.h), strict_power=True)
        assert_allclose(result.total_power, 4.0)

    def test_transform_shape(self):
        with self.assertRaises(DimensionError):
            bilinear_precode(TransformSet(self.A[:, :2, :2], 1.0), sample_of(self.h))


class TestWaterfill(unittest.TestCase):
    def test_equal_gains_share_equally(self):
        powers, level = waterfill(np.ones(4), 8.0)
        assert_allclose(powers, 2.0)
        assert_allclose(level, 3.0)

    def test_weak_channel_is_switched_off(self):
        gains = np.array([10.0, 5.0, 1e-3])
        powers, level = waterfill(gains, 1.0)
        self.assertEqual(powers[2], 0.0)
        assert_allclose(powers.sum(), 1.0)
        assert_allclose(powers[:2] + 1.0 / gains[:2], level, rtol=1e-12)
        self.assertGreaterEqual(1.0 / gains[2], level)

    def test_zero_budget(self):
        powers, level = waterfill(np.ones(3), 0.0)
        assert_allclose(powers, 0.0)


class TestZeroForcing(unittest.TestCase):
    RESIDUAL_RTOL = 1e-10
    LEVEL_ATOL = 1e-9

    def setUp(self):
        self.h = crandn(np.random.default_rng(1), (3, 5))

    def test_nulls_interference(self):
        result = zf_waterfilling(self.h, 10.0)
        G = self.h.conj() @ result.p.T
        scale = np.max(np.abs(np.diag(G)))
        off = G - np.diag(np.diag(G))
        self.assertLessEqual(np.max(np.abs(off)), self.RESIDUAL_RTOL * scale)

    def test_single_water_level(self):
        result = zf_waterfilling(self.h, 10.0)
        active = result.powers > 0
        levels = result.powers[active] + 1.0 / result.gains[active]
        assert_allclose(levels, result.water_level, atol=self.LEVEL_ATOL)
        assert_allclose(result.total_power, 10.0, rtol=1e-10)

    def test_rank_deficient(self):
        h = self.h.copy()
        h[2] = 2.0 * h[0]
        with self.assertRaises(RankDeficientError) as cm:
            zf_waterfilling(h, 10.0)
        self.assertIn(0, cm.exception.users)
        self.assertIn(2, cm.exception.users)
        self.assertNotIn(1, cm.exception.users)

    def test_more_users_than_antennas(self):
        with self.assertRaises(DimensionError):
            zf_waterfilling(crandn(np.random.default_rng(0), (4, 2)), 1.0)


class TestOnlineBcd(unittest.TestCase):
    def test_monotone_and_on_budget(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            h = crandn(rng, (3, 4))
            result = instantaneous_fp_bcd(h, 10.0)
            self.assertTrue(np.all(np.diff(result.trace) >= -1e-9))
            assert_allclose(result.total_power, 10.0, rtol=1e-9)
            assert_allclose(instantaneous_rate(h, result.p), result.trace[-1])

    def test_beats_matched_filter(self):
        h = crandn(np.random.default_rng(3), (3, 4))
        result = instantaneous_fp_bcd(h, 100.0)
        self.assertGreaterEqual(result.trace[-1], instantaneous_rate(h, matched_filters(h, 100.0)))

    def test_single_user_is_matched_filter(self):
        h = crandn(np.random.default_rng(4), (1, 4))
        P = 5.0
        expected = math.log2(1.0 + P * np.linalg.norm(h) ** 2)
        assert_allclose(instantaneous_fp_bcd(h, P).trace[-1], expected, rtol=1e-9)
        assert_allclose(instantaneous_rate(h, zf_waterfilling(h, P).p), expected, rtol=1e-9)

    def test_warm_start(self):
        rng = np.random.default_rng(5)
        h = crandn(rng, (2, 3))
        initial = crandn(rng, (2, 3))
        result = instantaneous_fp_bcd(h, 1.0, OnlineOptions(max_iter=3), initial=initial)
        scaled = initial / np.linalg.norm(initial)
        assert_allclose(result.trace[0], instantaneous_rate(h, scaled))
        assert_allclose(result.total_power, 1.0, rtol=1e-9)
        self.assertLessEqual(len(result.trace), 4)

    def test_options_from_params(self):
        options = OnlineOptions.from_params(dict(online_max_iter='7', warm_start='yes'))
        self.assertEqual(options.max_iter, 7)
        self.assertTrue(options.warm_start)


    def test_equal_split_for_orthogonal_equal_channels(self):
        q, _ = np.linalg.qr(crandn(np.random.default_rng(6), (3, 3)))
        h = 2.0 * q[:2].conj()
        result = instantaneous_fp_bcd(h, 4.0, OnlineOptions(tol=1e-12, max_iter=500))
        powers = np.sum(np.abs(result.p) ** 2, axis=1)
        self.assertLessEqual(abs(powers[0] - powers[1]), 1e-6)

    def test_matches_global_search_at_low_snr(self):
        P = 1.0
        for seed in range(3):
            rng = np.random.default_rng(20 + seed)
            h = crandn(rng, (2, 2))

            def negative_rate(x):
                p = x[:4].reshape(2, 2) + 1j * x[4:].reshape(2, 2)
                total = float(np.real(np.vdot(p, p)))
                if total == 0:
                    return 0.0
                return -instantaneous_rate(h, p * math.sqrt(P / total))

            best = max(-scipy.optimize.minimize(negative_rate, rng.standard_normal(8), method='Nelder-Mead',
                                                options=dict(xatol=1e-10, fatol=1e-12, maxiter=20000)).fun
                       for _ in range(20))
            result = instantaneous_fp_bcd(h, P, OnlineOptions(tol=1e-12, max_iter=2000))
            self.assertGreaterEqual(result.trace[-1], best - 1e-3, seed)


class TestStatisticalPrecoding(unittest.TestCase):
    P = 10.0
    POWER_DRAWS = 100000
    RATE_DRAWS = 10000

    @classmethod
    def setUpClass(cls):
        cls.model = build_statistical_model(ScenarioConfig(M=3, N=4, K=2, beta=0.3), np.random.default_rng(0))
        cls.state = optimize(cls.model, cls.P, OptimizerOptions(max_iter=20), rng=np.random.default_rng(1))
        cls.transforms = TransformSet.from_state(cls.state, cls.P)

    def test_average_power_meets_budget(self):
        cov = effective_covariance(self.model, self.state.phase)
        sample = sample_channel(self.model, self.state.phase, np.random.default_rng(2), size=self.POWER_DRAWS)
        p = np.einsum('kmn,skn->skm', self.transforms.A, sample.h)
        measured = np.mean(np.sum(np.abs(p) ** 2, axis=(1, 2)))
        expected = self.transforms.expected_power(cov)
        self.assertLessEqual(expected, self.P * (1.0 + 1e-9))
        assert_allclose(measured, expected, rtol=0.02)
        assert_allclose(bilinear_precode(self.transforms, sample[0]).p, p[0])

    def test_average_rate_exceeds_lower_bound(self):
        cov = effective_covariance(self.model, self.state.phase)
        ctx = variance_context(self.model, self.state.phase)
        bound = sum_rate_lower_bound(sinr_lower_bound(self.state.a, cov, ctx))
        sample = sample_channel(self.model, self.state.phase, np.random.default_rng(3), size=self.RATE_DRAWS)
        rates = np.array([instantaneous_rate(sample.h[s], bilinear_precode(self.transforms, sample[s]).p)
                          for s in range(self.RATE_DRAWS)])
        se = rates.std() / math.sqrt(self.RATE_DRAWS)
        self.assertGreaterEqual(rates.mean(), bound - 3.0 * se)


if __name__ == '__main__':
    unittest.main()
