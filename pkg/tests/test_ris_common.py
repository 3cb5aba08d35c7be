# Test the ris_common module
#
# Usage:
#
#    python -m pytest tests/test_ris_common.py
#

import os
import shutil
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_allclose

from library.ris_common import (
    ConfigError, ConsistencyError, ModelError, NumericalError, RisError, atomic_write_many, crandn, load_config,
    psd_sqrt, repair_psd, unvec, unvec_stack, validate_params, vec, vec_stack,
)

SPEC = dict(
    count=dict(type='int', default=3),
    ratio=dict(type='float', default=0.5),
    flag=dict(type='bool', default=False),
    mode=dict(default='fast', choices=['fast', 'slow']),
    grid=dict(type='list', elements='float', default=[1.0]),
    name=dict(required=True),
)


class TestValidateParams(unittest.TestCase):
    def test_defaults_are_applied(self):
        values = validate_params(SPEC, dict(name='x'))
        self.assertEqual(values['count'], 3)
        self.assertEqual(values['grid'], [1.0])
        self.assertFalse(values['flag'])

    def test_values_are_coerced(self):
        values = validate_params(SPEC, dict(name='x', count='4', ratio='0.25', flag='yes', grid='0, 10,20'))
        self.assertEqual(values['count'], 4)
        self.assertEqual(values['ratio'], 0.25)
        self.assertTrue(values['flag'])
        self.assertEqual(values['grid'], [0.0, 10.0, 20.0])

    def test_bad_choice(self):
        with self.assertRaises(ConfigError):
            validate_params(SPEC, dict(name='x', mode='medium'))

    def test_missing_required(self):
        with self.assertRaises(ConfigError):
            validate_params(SPEC, dict())

    def test_unknown_key(self):
        with self.assertRaises(ConfigError):
            validate_params(SPEC, dict(name='x', colour='red'))

    def test_fractional_int(self):
        with self.assertRaises(ConfigError):
            validate_params(SPEC, dict(name='x', count=2.5))


class TestLoadConfig(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def write(self, text):
        path = os.path.join(self.tmp, 'config.yaml')
        with open(path, 'w') as fh:
            fh.write(text)
        return path

    def test_flat_document(self):
        path = self.write("M: 4\npower_db: [0, 30]\n")
        self.assertEqual(load_config(path), dict(M=4, power_db=[0, 30]))

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config(os.path.join(self.tmp, 'nope.yaml'))

    def test_nested_value(self):
        with self.assertRaises(ConfigError):
            load_config(self.write("scenario:\n  M: 4\n"))

    def test_not_a_mapping(self):
        with self.assertRaises(ConfigError):
            load_config(self.write("- 1\n- 2\n"))


class TestLinearAlgebra(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(3)

    def hermitian_psd(self, n):
        x = crandn(self.rng, (n, n))
        return x @ x.conj().T

    def test_vec_is_column_stacking(self):
        a = np.arange(6).reshape(2, 3)
        assert_allclose(vec(a), [0, 3, 1, 4, 2, 5])
        assert_allclose(unvec(vec(a), 2), a)

    def test_stacked_vec(self):
        a = crandn(self.rng, (3, 4, 4))
        v = vec_stack(a)
        assert_allclose(v[1], vec(a[1]))
        assert_allclose(unvec_stack(v, 4), a)

    def test_trace_identities(self):
        C, Cj = self.hermitian_psd(4), self.hermitian_psd(4)
        A = crandn(self.rng, (4, 4))
        a = vec(A)
        assert_allclose(np.vdot(vec(C), a), np.trace(C @ A))
        lhs = np.vdot(a, np.kron(Cj.T, C) @ a)
        assert_allclose(lhs, np.trace(C @ A @ Cj @ A.conj().T))

    def test_psd_sqrt(self):
        C = self.hermitian_psd(5)
        root = psd_sqrt(C)
        assert_allclose(root @ root, C, atol=1e-10)
        assert_allclose(root, root.conj().T, atol=1e-12)

    def test_psd_sqrt_empty(self):
        self.assertEqual(psd_sqrt(np.zeros((0, 0))).shape, (0, 0))

    def test_psd_sqrt_rejects_indefinite(self):
        with self.assertRaises(ModelError):
            psd_sqrt(np.diag([1.0, -1.0]))

    def test_repair_clips_roundoff(self):
        v = crandn(self.rng, (3, 1))
        C = v @ v.conj().T
        C = C - 1e-14 * np.eye(3)
        self.assertGreaterEqual(np.linalg.eigvalsh(repair_psd(C))[0], -1e-12)


class TestAtomicWrite(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_writes_every_file(self):
        files = {os.path.join(self.tmp, 'a.tsv'): 'a\n', os.path.join(self.tmp, 'sub', 'b.tsv'): 'b\n'}
        written = atomic_write_many(files)
        self.assertEqual(sorted(written), sorted(files))
        with open(os.path.join(self.tmp, 'sub', 'b.tsv')) as fh:
            self.assertEqual(fh.read(), 'b\n')

    def test_nothing_is_left_on_failure(self):
        blocker = os.path.join(self.tmp, 'blocker')
        with open(blocker, 'w') as fh:
            fh.write('')
        files = {os.path.join(self.tmp, 'a.tsv'): 'a\n', os.path.join(blocker, 'b.tsv'): 'b\n'}
        with self.assertRaises(OSError):
            atomic_write_many(files)
        self.assertEqual(sorted(os.listdir(self.tmp)), ['blocker'])


class TestExceptions(unittest.TestCase):
    def test_consistency_is_numerical(self):
        self.assertTrue(issubclass(ConsistencyError, NumericalError))
        self.assertTrue(issubclass(NumericalError, RisError))


if __name__ == '__main__':
    unittest.main()
