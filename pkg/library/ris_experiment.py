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

"""Monte-Carlo experiment families.

Every scenario owns a ``SeedSequence([seed, index])`` and spawns separate
streams for the model, the channel draws, the random phase baseline and
the optimizer initialisation. Channel draws are replayed from the same
stream for every method, so methods are compared on common channels.
"""

import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List

import numpy as np
import pandas as pd

import library
from library.ris_channel import SCENARIO_ARGUMENT_SPEC, ScenarioConfig, build_statistical_model, sample_channel
from library.ris_common import (
    ConfigError, ConsistencyError, atomic_write_many, db_to_linear, split_params,
    validate_params,
)
from library.ris_optimizer import OPTIMIZER_ARGUMENT_SPEC, MONOTONE_ATOL, OptimizerOptions, optimize
from library.ris_precoding import (
    ONLINE_ARGUMENT_SPEC, OnlineOptions, TransformSet, bilinear_precode,
    instantaneous_fp_bcd, instantaneous_rate, zf_waterfilling,
)
from library.ris_statistics import PhaseState

try:
    import yaml
    YAML_AVAILABLE = True
except ImportError:
    YAML_AVAILABLE = False

log = logging.getLogger(__name__)

FAMILIES = ['convergence', 'rate-vs-power', 'rate-vs-N']
METHODS = ['alg1-gmf', 'alg2-bcd', 'alg2-zf', 'random-phase-gmf',
           'random-phase-bcd', 'no-ris-gmf', 'no-ris-bcd']
PHASE_RULES = {'alg1': 'optimized', 'alg2': 'optimized', 'random-phase': 'random', 'no-ris': 'none'}

# grids used when a family is run without an explicit power_db
FAMILY_POWER_DB = {
    'convergence': [0.0, 30.0],
    'rate-vs-power': [-10.0, 0.0, 10.0, 20.0, 30.0],
    'rate-vs-N': [10.0],
}

EXPERIMENT_ARGUMENT_SPEC = dict(
    family=dict(default='rate-vs-power', choices=FAMILIES),
    power_db=dict(type='list', elements='float'),
    n_grid=dict(type='list', elements='int', default=[0, 8, 16, 32]),
    scenarios=dict(type='int', default=20),
    samples=dict(type='int', default=200),
    methods=dict(type='list', elements='str', default=list(METHODS), choices=METHODS),
    threads=dict(type='int', default=0),
)

STREAM_MODEL, STREAM_CHANNEL, STREAM_PHASE, STREAM_DESIGN = range(4)


def config_hash(params):
    text = json.dumps(params, sort_keys=True, default=str)
    return hashlib.sha256(text.encode('utf-8')).hexdigest()[:16]


def scenario_streams(seed, index):
    return np.random.SeedSequence([seed, index]).spawn(4)


@dataclass
class ExperimentSpec:
    family: str
    power_db: List[float]
    n_grid: List[int]
    scenarios: int
    samples: int
    methods: List[str]
    threads: int
    scenario: ScenarioConfig
    optimizer: OptimizerOptions
    online: OnlineOptions

    @classmethod
    def from_params(cls, params):
        """Build a spec from one flat parameter dictionary."""
        params = dict((k, v) for k, v in (params or {}).items() if v is not None)
        scenario, experiment, optimizer, online = split_params(
            params, SCENARIO_ARGUMENT_SPEC, EXPERIMENT_ARGUMENT_SPEC,
            OPTIMIZER_ARGUMENT_SPEC, ONLINE_ARGUMENT_SPEC)
        values = validate_params(EXPERIMENT_ARGUMENT_SPEC, experiment)
        if values['power_db'] is None:
            values['power_db'] = list(FAMILY_POWER_DB[values['family']])
        config = ScenarioConfig.from_params(scenario)
        try:
            options = OptimizerOptions.from_params(optimizer, seed=config.seed)
        except ValueError as e:
            raise ConfigError(str(e))
        spec = cls(scenario=config, optimizer=options,
                   online=OnlineOptions.from_params(online), **values)
        return spec.validate()

    @property
    def seed(self):
        return self.scenario.seed

    def validate(self):
        if not self.power_db:
            raise ConfigError("power_db grid must not be empty")
        if self.family == 'rate-vs-N' and not self.n_grid:
            raise ConfigError("n_grid must not be empty")
        if any(n < 0 for n in self.n_grid):
            raise ConfigError("n_grid entries must be nonnegative")
        if self.scenarios < 1 or self.samples < 1:
            raise ConfigError("scenarios and samples must be at least 1")
        if self.family != 'convergence' and not self.methods:
            raise ConfigError("at least one method is required for %s" % self.family)
        if self.threads < 0:
            raise ConfigError("threads must be nonnegative")
        self.scenario.validate(zero_forcing='alg2-zf' in self.methods and self.family != 'convergence')
        return self

    def as_params(self):
        params = self.scenario.as_params()
        params.update(family=self.family, power_db=list(self.power_db), n_grid=list(self.n_grid),
                      scenarios=self.scenarios, samples=self.samples,
                      methods=list(self.methods), threads=self.threads)
        params.update((k, getattr(self.optimizer, k)) for k in OPTIMIZER_ARGUMENT_SPEC)
        params.update(online_tol=self.online.tol, online_max_iter=self.online.max_iter,
                      warm_start=self.online.warm_start, strict_power=self.online.strict_power)
        return params

    @property
    def run_id(self):
        # threads never changes a result
        params = self.as_params()
        params.pop('threads')
        return config_hash(params)

    @property
    def workers(self):
        return self.threads or os.cpu_count() or 1


@dataclass
class RunManifest:
    command: str
    config: Dict
    run_id: str
    seed: int
    started: str
    finished: str = ''
    version: str = library.__version__

    def finish(self):
        self.finished = timestamp()
        return self

    def as_dict(self):
        return dict(command=self.command, config=self.config, run_id=self.run_id,
                    seed=self.seed, started=self.started, finished=self.finished,
                    version=self.version, numpy=np.__version__, pandas=pd.__version__)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: pd.DataFrame
    aggregate: pd.DataFrame
    manifest: Dict = field(default_factory=dict)

    @property
    def run_id(self):
        return self.manifest.get('run_id', self.spec.run_id)

    def write(self, out_dir):
        """Write raw.tsv, aggregate.tsv and manifest.yaml; all or nothing."""
        if not YAML_AVAILABLE:
            raise ConfigError("The python yaml module is required")
        files = {
            os.path.join(out_dir, 'raw.tsv'): self.rows.to_csv(sep='\t', index=False, float_format='%.10g'),
            os.path.join(out_dir, 'aggregate.tsv'): self.aggregate.to_csv(sep='\t', index=False, float_format='%.10g'),
            os.path.join(out_dir, 'manifest.yaml'): yaml.safe_dump(self.manifest, default_flow_style=False),
        }
        return atomic_write_many(files)


class MethodFactory(object):
    def factory(name, online):
        if name not in METHODS:
            raise ConfigError("unknown method %s" % name)
        prefix, _, rule = name.rpartition('-')
        phase_rule = PHASE_RULES[prefix]
        if rule == 'gmf':
            return GmfMethod(name, phase_rule, online)
        elif rule == 'bcd':
            return BcdMethod(name, phase_rule, online)
        elif rule == 'zf':
            return ZfMethod(name, phase_rule, online)

    factory = staticmethod(factory)


class MethodCommon(object):
    """Per-interval precoding rule on top of one RIS configuration rule."""

    def __init__(self, name, phase_rule, online):
        self.name = name
        self.phase_rule = phase_rule
        self.online = online

    @property
    def needs_design(self):
        return self.phase_rule == 'optimized'

    def precode(self, h, P, design):
        raise NotImplementedError

    def rates(self, samples, P, design):
        rates = np.empty(len(samples))
        iterations = np.zeros(len(samples))
        for i in range(len(samples)):
            sample = samples[i]
            p, iterations[i] = self.precode(sample, P, design)
            rates[i] = instantaneous_rate(sample.h, p)
        return rates, iterations


class GmfMethod(MethodCommon):
    needs_design = True

    def precode(self, sample, P, design):
        transforms = TransformSet.from_state(design, P)
        return bilinear_precode(transforms, sample, self.online.strict_power).p, design.iterations


class BcdMethod(MethodCommon):
    @property
    def needs_design(self):
        return self.phase_rule == 'optimized' or self.online.warm_start

    def precode(self, sample, P, design):
        initial = None
        if self.online.warm_start:
            initial = bilinear_precode(TransformSet.from_state(design, P), sample, True).p
            if not np.any(initial):
                initial = None
        result = instantaneous_fp_bcd(sample.h, P, self.online, initial)
        return result.p, result.iterations


class ZfMethod(MethodCommon):
    def precode(self, sample, P, design):
        return zf_waterfilling(sample.h, P).p, 0


class ScenarioRun(object):
    """Everything one scenario contributes at one RIS size."""

    def __init__(self, spec, index, N, methods):
        self.spec = spec
        self.index = index
        self.N = N
        self.methods = methods
        self.streams = scenario_streams(spec.seed, index)
        self.designs = dict()
        self.models = dict()

    def model(self, phase_rule):
        """The N-element model; the no-RIS rule switches its reflected links off."""
        if 'ris' not in self.models:
            config = replace(self.spec.scenario, N=self.N)
            self.models['ris'] = build_statistical_model(
                config, np.random.default_rng(self.streams[STREAM_MODEL]))
            self.models['none'] = self.models['ris'].without_ris()
        return self.models['none' if phase_rule == 'none' else 'ris']

    def initial_phase(self, phase_rule):
        model = self.model(phase_rule)
        if phase_rule == 'random':
            return PhaseState.random(model.N, np.random.default_rng(self.streams[STREAM_PHASE]))
        if phase_rule == 'none':
            return PhaseState.zeros(model.N)
        return None

    def design(self, phase_rule, P):
        key = (phase_rule, P)
        if key not in self.designs:
            options = replace(self.spec.optimizer, optimize_phase=phase_rule == 'optimized')
            self.designs[key] = optimize(self.model(phase_rule), P, options,
                                         rng=np.random.default_rng(self.streams[STREAM_DESIGN]),
                                         initial_phase=self.initial_phase(phase_rule))
        return self.designs[key]

    def phase(self, method, P):
        if method.phase_rule == 'optimized':
            return self.design('optimized', P).phase
        return self.initial_phase(method.phase_rule)

    def rows(self, power_db):
        P = float(db_to_linear(power_db))
        rows = []
        for method in self.methods:
            started = time.perf_counter()
            design = self.design(method.phase_rule, P) if method.needs_design else None
            model = self.model(method.phase_rule)
            samples = sample_channel(model, self.phase(method, P),
                                     np.random.default_rng(self.streams[STREAM_CHANNEL]),
                                     size=self.spec.samples)
            rates, iterations = method.rates(samples, P, design)
            rows.append(dict(method=method.name, N=self.N, power_db=power_db,
                             scenario=self.index, samples=len(rates),
                             rate=math.fsum(rates) / len(rates),
                             rate_var=float(np.var(rates)),
                             iterations=float(np.mean(iterations)),
                             wall_time=time.perf_counter() - started))
        return rows


def _run_scenarios(spec, jobs):
    with ThreadPoolExecutor(max_workers=spec.workers) as executor:
        chunks = list(executor.map(lambda job: job(), jobs))
    return [row for chunk in chunks for row in chunk]


def _methods(spec):
    return [MethodFactory.factory(name, spec.online) for name in spec.methods]


def _scenario_job(spec, index, N, methods):
    def job():
        run = ScenarioRun(spec, index, N, methods)
        rows = []
        for power_db in spec.power_db:
            rows.extend(run.rows(power_db))
        log.info("scenario %d (N=%d) done", index, N)
        return rows
    return job


def aggregate_rates(rows):
    """Mean and standard errors per (method, N, power_db).

    ``std_error`` pools every channel draw of every scenario;
    ``scenario_std_error`` is the spread of the per-scenario means.
    """
    records = []
    for (method, N, power_db), group in rows.groupby(['method', 'N', 'power_db'], sort=True):
        group = group.sort_values('scenario')
        n = group['samples'].to_numpy(dtype=float)
        means = group['rate'].to_numpy()
        variances = group['rate_var'].to_numpy()
        total = math.fsum(n)
        mean = math.fsum(n * means) / total
        second = math.fsum(n * (variances + means ** 2)) / total
        pooled = max(second - mean ** 2, 0.0) * total / max(total - 1.0, 1.0)
        count = len(means)
        spread = math.fsum((means - math.fsum(means) / count) ** 2) / max(count - 1, 1)
        records.append(dict(method=method, N=int(N), power_db=power_db,
                            mean=mean,
                            std_error=math.sqrt(pooled / total),
                            scenario_std_error=math.sqrt(spread / count) if count > 1 else 0.0,
                            scenarios=count, samples=int(total),
                            iterations=math.fsum(group['iterations']) / count))
    return pd.DataFrame.from_records(records)


def _finish(spec, rows, aggregate, command, started):
    run_id = spec.run_id
    manifest = RunManifest(command, spec.as_params(), run_id, spec.seed, started).finish()
    rows.insert(0, 'run_id', run_id)
    rows.insert(1, 'seed', spec.seed)
    aggregate.insert(0, 'run_id', run_id)
    aggregate.insert(1, 'seed', spec.seed)
    return ExperimentResult(spec=spec, rows=rows, aggregate=aggregate, manifest=manifest.as_dict())


def timestamp():
    return time.strftime('%Y-%m-%dT%H:%M:%S%z')


def _check_family(spec, family):
    if spec.family != family:
        raise ConfigError("spec is for family %s, not %s" % (spec.family, family))


def run_convergence(spec):
    """Per-sweep lower-bound traces of the offline design on scenario 0."""
    _check_family(spec, 'convergence')
    started = timestamp()
    streams = scenario_streams(spec.seed, 0)
    model = build_statistical_model(spec.scenario, np.random.default_rng(streams[STREAM_MODEL]))
    records = []
    for power_db in spec.power_db:
        state = optimize(model, float(db_to_linear(power_db)), spec.optimizer,
                         rng=np.random.default_rng(streams[STREAM_DESIGN]))
        rates = np.array(state.rates)
        if np.any(np.diff(rates) < -MONOTONE_ATOL):
            raise ConsistencyError("trace at %g dB is not monotone" % power_db)
        span = rates[-1] - rates[0]
        normalised = (rates - rates[0]) / span if span > 0 else np.ones_like(rates)
        for entry, value in zip(state.trace, normalised):
            records.append(dict(power_db=power_db, sweep=entry['sweep'], rate=entry['rate'],
                                surrogate=entry['surrogate'], power=entry['power'],
                                kappa=entry['kappa'], grad_norm=entry['grad_norm'],
                                normalised=value, converged=state.converged))
        log.info("convergence at %g dB: %d sweeps, rate %.6g", power_db, state.iterations, rates[-1])
    rows = pd.DataFrame.from_records(records)
    aggregate = rows.pivot(index='sweep', columns='power_db', values='rate')
    aggregate.columns = ['P=%gdB' % p for p in aggregate.columns]
    aggregate = aggregate.reset_index()
    return _finish(spec, rows, aggregate, 'experiment', started)


def run_rate_vs_power(spec):
    _check_family(spec, 'rate-vs-power')
    started = timestamp()
    methods = _methods(spec)
    jobs = [_scenario_job(spec, index, spec.scenario.N, methods) for index in range(spec.scenarios)]
    rows = pd.DataFrame.from_records(_run_scenarios(spec, jobs))
    return _finish(spec, rows, aggregate_rates(rows), 'experiment', started)


def run_rate_vs_N(spec):
    """Same statistics as ``run_rate_vs_power`` over the RIS sizes of ``n_grid``."""
    _check_family(spec, 'rate-vs-N')
    started = timestamp()
    methods = _methods(spec)
    jobs = [_scenario_job(spec, index, N, methods)
            for N in spec.n_grid for index in range(spec.scenarios)]
    rows = pd.DataFrame.from_records(_run_scenarios(spec, jobs))
    return _finish(spec, rows, aggregate_rates(rows), 'experiment', started)


FAMILY_RUNNERS = {
    'convergence': run_convergence,
    'rate-vs-power': run_rate_vs_power,
    'rate-vs-N': run_rate_vs_N,
}


def run_experiment(spec):
    return FAMILY_RUNNERS[spec.family](spec)
