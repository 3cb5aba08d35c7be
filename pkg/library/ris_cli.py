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

DOCUMENTATION = '''
---
program: ris-sim
short_description: Statistical-CSI RIS design and Monte-Carlo evaluation
description:
   - Designs RIS phase shifts and bilinear precoders from channel covariances
     and evaluates them against online precoding baselines.
   - Every command prints one JSON document on stdout; logs go to stderr.
commands:
  - optimize
  - experiment
  - selftest
options:
  config:
    description:
      - Flat YAML file of scenario, experiment and optimizer options.
        Command line flags override its values.
    required: false
  seed:
    description:
      - Root seed of every random stream.
    required: false
    default: 0
  family:
    description:
      - Experiment family to run.
    required: false
    default: rate-vs-power
    choices:
      - convergence
      - rate-vs-power
      - rate-vs-N
  power_db:
    description:
      - Comma separated transmit powers in dB (unit noise power).
    required: false
  n_grid:
    description:
      - Comma separated RIS sizes for the rate-vs-N family.
    required: false
  methods:
    description:
      - Comma separated methods to evaluate. Any of C(alg1-gmf), C(alg2-bcd),
        C(alg2-zf), C(random-phase-gmf), C(random-phase-bcd), C(no-ris-gmf),
        C(no-ris-bcd).
    required: false
  scenarios:
    description:
      - Number of covariance draws.
    required: false
    default: 20
  samples:
    description:
      - Channel draws per scenario.
    required: false
    default: 200
  out:
    description:
      - Directory receiving the result tables and the manifest.
    required: false
    default: results
  threads:
    description:
      - Scenarios run in parallel; 0 uses every core.
    required: false
    default: 0
  quick:
    description:
      - Smaller sample counts and looser tolerances for C(selftest).
    required: false
    default: false
  verbose:
    description:
      - Log at DEBUG instead of INFO.
    required: false
    default: false

notes:
   - Exit codes are 0 on success, 2 for usage and configuration errors,
     3 for numerical failures, 4 for internal consistency failures and
     5 when a self-test check fails.

requirements: [ "numpy", "scipy", "pandas", "PyYAML" ]
'''

EXAMPLES = """
# Offline design at 0 and 30 dB on the desk scenario
ris-sim.py optimize --config tests/fixtures/desk.yaml --power-db 0,30 --out out/design

# Sum-rate against transmit power for three methods
ris-sim.py experiment --config tests/fixtures/desk.yaml --family rate-vs-power \\
    --methods alg1-gmf,random-phase-gmf,no-ris-gmf --out out/power

# Oracle checks with reduced sample counts
ris-sim.py selftest --quick
"""

RETURN = '''
changed:
    description: Whether result files were written
    returned: always
    type: bool
    sample: true
files:
    description: Paths of the written result files
    returned: optimize, experiment
    type: list
    sample: ["out/power/raw.tsv", "out/power/aggregate.tsv", "out/power/manifest.yaml"]
run_id:
    description: Hash of the resolved configuration, repeated in every table
    returned: optimize, experiment
    type: string
    sample: "3f9c2a7d41b0e8aa"
converged:
    description: Whether every offline design met its tolerance
    returned: optimize
    type: bool
    sample: true
checks:
    description: Outcome of every self-test check
    returned: selftest
    type: list
    sample: [{"name": "fp-tightness", "passed": true, "detail": "worst gap 1.1e-15 nats"}]
'''

import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

import library
from library.ris_channel import build_statistical_model
from library.ris_common import (
    ConfigError, ConsistencyError, DimensionError, DomainError, ModelError,
    NumericalError, RisError, atomic_write_many, db_to_linear, load_config,
)
from library.ris_experiment import (
    FAMILIES, STREAM_DESIGN, STREAM_MODEL, ExperimentSpec, RunManifest,
    run_experiment, scenario_streams, timestamp,
)
from library.ris_optimizer import optimize
from library.ris_selftest import run_selftest

try:
    import yaml
    YAML_AVAILABLE = True
except ImportError:
    YAML_AVAILABLE = False

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_CONSISTENCY = 4
EXIT_SELFTEST = 5

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

COMMANDS = ['optimize', 'experiment', 'selftest']
RUNS = ['optimize', 'experiment']

CLI_ARGUMENT_SPEC = dict(
    config=dict(type='str', commands=RUNS),
    seed=dict(type='int', commands=COMMANDS),
    family=dict(type='str', choices=FAMILIES, commands=['experiment']),
    power_db=dict(type='list', commands=RUNS),
    n_grid=dict(type='list', commands=['experiment']),
    methods=dict(type='list', commands=['experiment']),
    scenarios=dict(type='int', commands=['experiment']),
    samples=dict(type='int', commands=['experiment']),
    out=dict(type='str', default='results', commands=RUNS),
    threads=dict(type='int', commands=['experiment']),
    quick=dict(type='bool', commands=['selftest']),
    verbose=dict(type='bool', commands=COMMANDS),
)

# flags that are handled by the CLI itself rather than passed on as options
LOCAL_OPTIONS = ('config', 'out', 'quick', 'verbose')


def exit_json(**result):
    print(json.dumps(result, sort_keys=True, default=str))
    return EXIT_OK


def fail_json(code, msg, **extra):
    extra.update(failed=True, msg=msg)
    print(json.dumps(extra, sort_keys=True, default=str))
    return code


def _add_option(parser, name, spec):
    flag = '--' + name.replace('_', '-')
    if spec['type'] == 'bool':
        if name == 'verbose':
            parser.add_argument('-v', flag, action='store_true', dest=name)
        else:
            parser.add_argument(flag, action='store_true', dest=name)
        return
    kwargs = dict(dest=name, default=None)
    if spec['type'] == 'int':
        kwargs['type'] = int
    if spec.get('choices'):
        kwargs['choices'] = spec['choices']
    parser.add_argument(flag, **kwargs)


def build_parser():
    parser = argparse.ArgumentParser(prog='ris-sim', description='Statistical-CSI RIS design')
    parser.add_argument('--version', action='version', version=library.__version__)
    commands = parser.add_subparsers(dest='command')
    commands.required = True
    for command in COMMANDS:
        sub = commands.add_parser(command)
        for name, spec in sorted(CLI_ARGUMENT_SPEC.items()):
            if command in spec['commands']:
                _add_option(sub, name, spec)
    return parser


def resolve_params(config_path, overrides):
    """Config file values with the command line overrides on top."""
    params = load_config(config_path) if config_path else dict()
    for key, value in overrides.items():
        if key in LOCAL_OPTIONS or value is None:
            continue
        params[key] = value
    return params


def cmd_optimize(config_path, overrides, out='results'):
    """One offline design per power level on scenario 0."""
    if not YAML_AVAILABLE:
        raise ConfigError("The python yaml module is required")
    started = timestamp()
    params = resolve_params(config_path, overrides)
    params['family'] = 'convergence'
    spec = ExperimentSpec.from_params(params)
    streams = scenario_streams(spec.seed, 0)
    model = build_statistical_model(spec.scenario, np.random.default_rng(streams[STREAM_MODEL]))

    traces, phases, norms = [], [], []
    converged = True
    for power_db in spec.power_db:
        state = optimize(model, float(db_to_linear(power_db)), spec.optimizer,
                         rng=np.random.default_rng(streams[STREAM_DESIGN]))
        if not state.converged:
            log.warning("design at %g dB stopped after %d sweeps without converging",
                        power_db, state.iterations)
        converged = converged and state.converged
        for entry in state.trace:
            traces.append(dict(power_db=power_db, **entry))
        for n, angle in enumerate(state.phase.angles):
            phases.append(dict(power_db=power_db, element=n, angle=angle))
        for k, A in enumerate(state.A):
            norms.append(dict(power_db=power_db, user=k, frobenius_norm=np.linalg.norm(A)))

    run_id = spec.run_id
    tables = dict(trace=traces, phases=phases, transforms=norms)
    files = dict()
    for name, records in tables.items():
        frame = pd.DataFrame.from_records(records)
        frame.insert(0, 'run_id', run_id)
        files[os.path.join(out, name + '.tsv')] = frame.to_csv(sep='\t', index=False, float_format='%.12g')
    manifest = RunManifest('optimize', spec.as_params(), run_id, spec.seed, started).finish()
    files[os.path.join(out, 'manifest.yaml')] = yaml.safe_dump(manifest.as_dict(), default_flow_style=False)
    written = atomic_write_many(files)
    return dict(changed=True, files=written, run_id=run_id, converged=converged)


def cmd_experiment(config_path, overrides, out='results'):
    params = resolve_params(config_path, overrides)
    spec = ExperimentSpec.from_params(params)
    log.info("running %s with %d scenarios x %d samples", spec.family, spec.scenarios, spec.samples)
    result = run_experiment(spec)
    written = result.write(out)
    return dict(changed=True, files=written, run_id=result.run_id, family=spec.family)


def cmd_selftest(quick=False, seed=0, context_factory=None):
    kwargs = dict(quick=quick, seed=seed)
    if context_factory is not None:
        kwargs['context_factory'] = context_factory
    results = run_selftest(**kwargs)
    return dict(changed=False, checks=[r.as_dict() for r in results],
                passed=all(r.passed for r in results))


def exit_code_for(error):
    if isinstance(error, (ConfigError, DimensionError, DomainError)):
        return EXIT_USAGE
    if isinstance(error, ConsistencyError):
        return EXIT_CONSISTENCY
    if isinstance(error, (NumericalError, ModelError)):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format=LOG_FORMAT, stream=sys.stderr)
    options = vars(args)
    command = options.pop('command')

    try:
        if command == 'optimize':
            return exit_json(**cmd_optimize(args.config, options, args.out))
        elif command == 'experiment':
            return exit_json(**cmd_experiment(args.config, options, args.out))
        elif command == 'selftest':
            result = cmd_selftest(quick=args.quick, seed=args.seed or 0)
            for check in result['checks']:
                log.info("%-24s %s", check['name'], 'pass' if check['passed'] else 'FAIL')
            if not result['passed']:
                return fail_json(EXIT_SELFTEST, "self-test failed", **result)
            return exit_json(**result)
    except RisError as e:
        return fail_json(exit_code_for(e), str(e), error=type(e).__name__)
    except ValueError as e:
        return fail_json(EXIT_USAGE, str(e), error=type(e).__name__)


if __name__ == '__main__':
    sys.exit(main())
