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

"""Shared plumbing for the ris-statdesign modules.

Holds the exception hierarchy, the ``argument_spec`` style option
validation used by every configurable surface, flat YAML config loading,
and the handful of complex linear-algebra helpers (vec/unvec, Hermitian
part, PSD square roots) the numerical modules share.
"""

import logging
import os
import tempfile

import numpy as np
import scipy.linalg

try:
    import yaml
    YAML_AVAILABLE = True
except ImportError:
    YAML_AVAILABLE = False

log = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-12
PSD_RTOL = 1e-10
BOOLEANS_TRUE = ['yes', 'on', '1', 'true', 'True', 1, True]
BOOLEANS_FALSE = ['no', 'off', '0', 'false', 'False', 0, False]


class RisError(Exception):
    pass


class ConfigError(RisError):
    pass


class DimensionError(RisError, ValueError):
    pass


class DomainError(RisError, ValueError):
    pass


class ModelError(RisError):
    pass


class NumericalError(RisError):
    pass


class DegenerateStateError(NumericalError):
    pass


class BracketError(NumericalError):
    pass


class RankDeficientError(NumericalError):
    def __init__(self, msg, users=()):
        super(RankDeficientError, self).__init__(msg)
        self.users = tuple(users)


class ConsistencyError(NumericalError):
    pass


def _to_bool(key, value):
    if value in BOOLEANS_TRUE:
        return True
    if value in BOOLEANS_FALSE:
        return False
    raise ConfigError("%s: '%s' is not a valid boolean" % (key, value))


def _to_list(key, value, elements):
    if isinstance(value, str):
        value = [v.strip() for v in value.split(',') if v.strip()]
    elif not isinstance(value, (list, tuple)):
        value = [value]
    convert = {'int': int, 'float': float, 'str': str}[elements]
    try:
        return [convert(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError("%s: elements must be of type %s" % (key, elements))


def _coerce(key, value, spec):
    kind = spec.get('type', 'str')
    if kind == 'bool':
        return _to_bool(key, value)
    if kind == 'list':
        return _to_list(key, value, spec.get('elements', 'str'))
    if kind in ('int', 'float'):
        if isinstance(value, bool):
            raise ConfigError("%s: expected %s, got a boolean" % (key, kind))
        try:
            number = float(value)
        except (TypeError, ValueError):
            raise ConfigError("%s: '%s' is not a valid %s" % (key, value, kind))
        if kind == 'int':
            if number != int(number):
                raise ConfigError("%s: '%s' is not an integer" % (key, value))
            return int(number)
        return number
    if isinstance(value, (dict, list)):
        raise ConfigError("%s: expected a scalar value" % key)
    return str(value)


def validate_params(argument_spec, params, allow_unknown=False):
    """Validate ``params`` against an Ansible style ``argument_spec``.

    Every option is described by ``dict(type=..., default=..., required=...,
    choices=..., elements=...)``. Missing options take their default,
    values are coerced to the declared type and checked against
    ``choices``. Returns a new dictionary holding exactly the keys of ``spec``.
    """
    params = dict(params or {})
    unknown = sorted(set(params) - set(argument_spec))
    if unknown and not allow_unknown:
        raise ConfigError("unsupported parameters: %s" % ', '.join(unknown))

    result = dict()
    for key, spec in argument_spec.items():
        value = params.get(key)
        if value is None:
            if spec.get('required', False):
                raise ConfigError("missing required argument: %s" % key)
            value = spec.get('default')
            if value is None:
                result[key] = None
                continue
        value = _coerce(key, value, spec)
        choices = spec.get('choices')
        if choices is not None:
            values = value if isinstance(value, list) else [value]
            bad = [v for v in values if v not in choices]
            if bad:
                raise ConfigError("value of %s must be one of: %s, got: %s" % (
                    key, ', '.join(str(c) for c in choices), ', '.join(str(b) for b in bad)))
        result[key] = value
    return result


def split_params(params, *specs):
    """Partition one flat parameter dictionary across several specs."""
    known = set()
    for spec in specs:
        known.update(spec)
    unknown = sorted(set(params) - known)
    if unknown:
        raise ConfigError("unsupported parameters: %s" % ', '.join(unknown))
    return [dict((k, v) for k, v in params.items() if k in spec) for spec in specs]


def load_config(path):
    """Read a flat ``key: value`` YAML document."""
    if not YAML_AVAILABLE:
        raise ConfigError("The python yaml module is required")
    if not os.path.isfile(path):
        raise ConfigError("config file not found: %s" % path)
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ConfigError("could not parse %s: %s" % (path, e))
    if doc is None:
        return dict()
    if not isinstance(doc, dict):
        raise ConfigError("%s must hold a mapping of options" % path)
    for key, value in doc.items():
        if isinstance(value, dict):
            raise ConfigError("%s: nested values are not supported (key %s)" % (path, key))
    return dict((str(k), v) for k, v in doc.items())


def db_to_linear(value_db):
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def crandn(rng, shape):
    """Draws of CN(0, 1): real and imaginary parts i.i.d. N(0, 1/2)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def herm(x):
    return 0.5 * (x + np.conj(np.swapaxes(x, -1, -2)))


def vec(a):
    """Column-stacking vectorisation."""
    return np.asarray(a).reshape(-1, order='F')


def unvec(v, rows):
    return np.asarray(v).reshape(-1, rows).T


def vec_stack(a):
    """Column-stack every matrix of a (K, M, M) stack into a (K, M*M) array."""
    a = np.asarray(a)
    return np.swapaxes(a, -1, -2).reshape(a.shape[0], -1)


def unvec_stack(v, rows):
    v = np.asarray(v)
    return np.swapaxes(v.reshape(v.shape[0], rows, -1), -1, -2)


def check_hermitian_psd(c, name='matrix'):
    """Raise ModelError unless ``c`` is Hermitian PSD within tolerance."""
    c = np.asarray(c)
    n = c.shape[-1]
    if n == 0:
        return
    scale = np.linalg.norm(c)
    if np.linalg.norm(c - c.conj().T) > HERMITIAN_RTOL * max(scale, 1.0):
        raise ModelError("%s is not Hermitian" % name)
    trace = np.real(np.trace(c))
    low = scipy.linalg.eigvalsh(herm(c))[0]
    if low < -PSD_RTOL * max(trace, 0.0) / n:
        raise ModelError("%s is not positive semidefinite (min eigenvalue %g)" % (name, low))


def repair_psd(c):
    """Symmetrize and clip round-off negative eigenvalues of a PSD matrix."""
    c = herm(np.asarray(c, dtype=complex))
    n = c.shape[-1]
    if n == 0:
        return c
    w, v = scipy.linalg.eigh(c)
    if w[0] >= 0:
        return c
    trace = np.sum(w)
    if w[0] < -PSD_RTOL * max(trace, 0.0) / n:
        raise ModelError("covariance has eigenvalue %g below round-off" % w[0])
    w = np.clip(w, 0.0, None)
    return herm((v * w) @ v.conj().T)


def psd_sqrt(c):
    """Hermitian PSD principal square root."""
    c = np.asarray(c, dtype=complex)
    n = c.shape[-1]
    if n == 0:
        return np.zeros((0, 0), dtype=complex)
    w, v = scipy.linalg.eigh(herm(c))
    trace = np.sum(w)
    if w[0] < -PSD_RTOL * max(trace, 0.0) / n:
        raise ModelError("cannot take the square root of a non-PSD matrix (min eigenvalue %g)" % w[0])
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def atomic_write_many(files):
    """Write a ``{path: text}`` mapping; nothing is renamed unless every write succeeds."""
    staged = []
    try:
        for path, text in files.items():
            directory = os.path.dirname(os.path.abspath(path))
            if not os.path.isdir(directory):
                os.makedirs(directory)
            fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-')
            staged.append((tmp, path))
            with os.fdopen(fd, 'w') as fh:
                fh.write(text)
        for tmp, path in staged:
            os.replace(tmp, path)
    except Exception:
        for tmp, path in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise
    log.debug("wrote %s", ", ".join(path for tmp, path in staged))
    return [path for tmp, path in staged]
