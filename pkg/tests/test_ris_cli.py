# Test the ris_cli module and the documentation checker
#
# Usage:
#
#    python -m pytest tests/test_ris_cli.py
#

import contextlib
import importlib.util
import io
import json
import os
import shutil
import tempfile
import unittest

import pandas as pd
import yaml

from library import ris_cli
from tests.test_ris_selftest import flipped_context

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)
DESK = os.path.join(HERE, 'fixtures', 'desk.yaml')

SMALL = dict(M=4, N=4, K=2, seed=0, max_iter=20, scenarios=2, samples=10)


def load_doc_test():
    path = os.path.join(ROOT, 'scripts', 'ris-doc-test.py')
    spec = importlib.util.spec_from_file_location('ris_doc_test', path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        self.out = os.path.join(self.tmp, 'out')
        self.config = os.path.join(self.tmp, 'small.yaml')
        with open(self.config, 'w') as fh:
            yaml.safe_dump(SMALL, fh)

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def run_cli(self, *argv):
        stdout = io.StringIO()
        with contextlib.redirect_stdout(stdout):
            code = ris_cli.main(list(argv))
        return code, json.loads(stdout.getvalue())


class TestParser(unittest.TestCase):
    def test_commands(self):
        parser = ris_cli.build_parser()
        args = parser.parse_args(['experiment', '--power-db', '0,10', '--n-grid', '0,8', '--threads', '2'])
        self.assertEqual(args.power_db, '0,10')
        self.assertEqual(args.threads, 2)
        self.assertTrue(parser.parse_args(['selftest', '--quick']).quick)

    def test_selftest_has_no_config(self):
        with self.assertRaises(SystemExit):
            with contextlib.redirect_stderr(io.StringIO()):
                ris_cli.build_parser().parse_args(['selftest', '--config', DESK])

    def test_desk_fixture_is_valid(self):
        params = ris_cli.resolve_params(DESK, dict())
        self.assertEqual(params['M'], 8)

    def test_exit_codes(self):
        from library.ris_common import BracketError, ConfigError, ConsistencyError, DimensionError
        self.assertEqual(ris_cli.exit_code_for(ConfigError('x')), 2)
        self.assertEqual(ris_cli.exit_code_for(DimensionError('x')), 2)
        self.assertEqual(ris_cli.exit_code_for(BracketError('x')), 3)
        self.assertEqual(ris_cli.exit_code_for(ConsistencyError('x')), 4)


class TestOptimize(CliTestCase):
    def test_writes_trace_phases_and_norms(self):
        code, result = self.run_cli('optimize', '--config', self.config, '--seed', '7', '--out', self.out)
        self.assertEqual(code, 0)
        self.assertEqual(sorted(os.listdir(self.out)),
                         ['manifest.yaml', 'phases.tsv', 'trace.tsv', 'transforms.tsv'])
        trace = pd.read_csv(os.path.join(self.out, 'trace.tsv'), sep='\t')
        for _, group in trace.groupby('power_db'):
            self.assertTrue((group['rate'].diff().dropna() >= -1e-9).all())
        with open(os.path.join(self.out, 'manifest.yaml')) as fh:
            manifest = yaml.safe_load(fh)
        self.assertEqual(manifest['seed'], 7)
        self.assertEqual(manifest['config']['seed'], 7)
        self.assertEqual(manifest['run_id'], result['run_id'])
        phases = pd.read_csv(os.path.join(self.out, 'phases.tsv'), sep='\t')
        self.assertEqual(len(phases), 4 * 2)

    def test_missing_config(self):
        code, result = self.run_cli('optimize', '--config', os.path.join(self.tmp, 'nope.yaml'), '--out', self.out)
        self.assertEqual(code, 2)
        self.assertTrue(result['failed'])
        self.assertFalse(os.path.exists(self.out))


class TestExperiment(CliTestCase):
    def test_convergence_columns(self):
        code, _ = self.run_cli('experiment', '--config', self.config, '--family', 'convergence', '--out', self.out)
        self.assertEqual(code, 0)
        table = pd.read_csv(os.path.join(self.out, 'aggregate.tsv'), sep='\t')
        self.assertIn('P=0dB', table.columns)
        self.assertIn('P=30dB', table.columns)

    def test_empty_methods(self):
        code, result = self.run_cli('experiment', '--config', self.config, '--methods', '', '--out', self.out)
        self.assertEqual(code, 2)
        self.assertFalse(os.path.exists(self.out))

    def test_repeat_is_byte_identical(self):
        tables = []
        for run in ('a', 'b'):
            out = os.path.join(self.tmp, run)
            code, _ = self.run_cli('experiment', '--config', self.config, '--power-db', '0,10',
                                   '--methods', 'alg1-gmf,no-ris-gmf,alg2-zf', '--out', out)
            self.assertEqual(code, 0)
            with open(os.path.join(out, 'aggregate.tsv'), 'rb') as fh:
                tables.append(fh.read())
        self.assertEqual(tables[0], tables[1])


class TestSelftest(unittest.TestCase):
    def test_quick_selftest_passes(self):
        stdout = io.StringIO()
        with contextlib.redirect_stdout(stdout):
            code = ris_cli.main(['selftest', '--quick'])
        self.assertEqual(code, 0, stdout.getvalue())
        result = json.loads(stdout.getvalue())
        self.assertEqual(len(result['checks']), 5)

    def test_mutation_is_reported(self):
        result = ris_cli.cmd_selftest(quick=True, context_factory=flipped_context)
        self.assertFalse(result['passed'])


class TestDocumentation(unittest.TestCase):
    def test_documentation_matches_options(self):
        doc, errors = load_doc_test().doc_errors(ris_cli)
        self.assertEqual(errors, [])
        self.assertEqual(doc['program'], 'ris-sim')
        self.assertEqual(sorted(doc['commands']), sorted(ris_cli.COMMANDS))

    def test_man_text_is_ascii(self):
        module = load_doc_test()
        doc, _ = module.doc_errors(ris_cli)
        module.get_man_text(doc).encode('ascii')


if __name__ == '__main__':
    unittest.main()
