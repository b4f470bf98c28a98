#!/usr/bin/env python3
"""
The Experiment Controller (app.py)
Acts as the 'General Contractor'.
- Parses the command line (`run <config> [--seed] [--samples] [--out] [--log-level]`).
- Loads and validates the YAML experiment config.
- Delegates the check to the router (checks.py) and the rendering to formatter.py.
- Writes <out>.json and <out>.csv atomically (temp file + rename).
Exit codes: 0 PASS, 1 FAIL, 2 INCONCLUSIVE, 3 config error.
"""

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import yaml

import common
from checks import run_check
from common import ConfigError, ParameterError, ToolkitError, debug_log
from curvature_comparison import ComparisonParams
from formatter import ReportFormatter
from spacetime_models import ModelSpec, build_model

EXIT_CODES = {'PASS': 0, 'FAIL': 1, 'INCONCLUSIVE': 2, 'CONFIG': 3}
CONFIG_KEYS = {'model', 'check', 'params', 'samples', 'seed', 'out', 'inputs'}
PARAM_KEYS = {'K', 'N', 'q', 't'}

# ==================== CONFIG ====================

@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    check: str
    params: ComparisonParams = field(default_factory=ComparisonParams)
    inputs: dict = field(default_factory=dict)
    samples: Optional[int] = None
    seed: int = common.DEFAULTS['seed']
    out: Optional[str] = None
    config_hash: str = ''


def _real(value, key):
    if isinstance(value, str) and value.strip().lower() in ('inf', '+inf', '-inf', 'infinity', '-infinity'):
        return -math.inf if value.strip().startswith('-') else math.inf
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError("expected a real number", key=key, got=str(value))


def _canonical(mapping):
    return json.dumps(mapping, sort_keys=True, separators=(',', ':'), ensure_ascii=True, default=str)


def config_hash(mapping):
    return hashlib.sha256(_canonical(mapping).encode('utf-8')).hexdigest()


def effective_config(cfg):
    """The mapping a run actually executes: defaults filled in, CLI overrides applied, `out` left out."""
    return {
        'model': cfg.model.to_mapping(),
        'check': cfg.check,
        'params': cfg.params.to_mapping(),
        'inputs': cfg.inputs,
        'samples': cfg.samples,
        'seed': cfg.seed,
    }


def with_hash(cfg):
    return replace(cfg, config_hash=config_hash(effective_config(cfg)))


def parse_config(mapping, default_out=None):
    if not isinstance(mapping, dict):
        raise ConfigError("config must be a mapping")
    unknown = sorted(set(mapping) - CONFIG_KEYS)
    if unknown:
        raise ConfigError("unknown keys in config", keys=unknown)
    for key in ('model', 'check'):
        if key not in mapping:
            raise ConfigError("config is missing a required key", key=key)

    params = mapping.get('params') or {}
    if not isinstance(params, dict):
        raise ConfigError("params must be a mapping")
    bad = sorted(set(params) - PARAM_KEYS)
    if bad:
        raise ConfigError("unknown keys in params", keys=bad)
    comparison = ComparisonParams(**{k: _real(v, k) for k, v in params.items()})

    try:
        samples = None if mapping.get('samples') is None else int(mapping['samples'])
        seed = int(mapping.get('seed', common.DEFAULTS['seed']))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"samples and seed must be integers: {exc}")
    if samples is not None and samples <= 0:
        raise ConfigError("samples must be positive", samples=samples)

    spec = ModelSpec.from_mapping(mapping['model'])
    try:
        comparison.validate(build_model(spec).dim)
    except ParameterError as exc:
        detail = {k: v for k, v in exc.reason.items() if k not in ('kind', 'message')}
        raise ConfigError(f"invalid parameters: {exc}", **detail)

    return with_hash(ExperimentConfig(
        model=spec,
        check=str(mapping['check']),
        params=comparison,
        inputs=mapping.get('inputs') or {},
        samples=samples,
        seed=seed,
        out=mapping.get('out', default_out),
    ))


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError("config file not found", path=path)
    try:
        with open(path) as handle:
            mapping = yaml.safe_load(handle)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}", path=path)
    return parse_config(mapping, default_out=os.path.splitext(path)[0])

# ==================== EXECUTION ====================

def run_experiment(cfg):
    """Runs the configured check; toolkit errors become INCONCLUSIVE records with a reason."""
    try:
        record = run_check(cfg)
    except ConfigError:
        raise
    except (ToolkitError, np.linalg.LinAlgError) as exc:
        reason = getattr(exc, 'reason', {}) or {}
        debug_log('app', f"{cfg.check} inconclusive: {exc}")
        record = {
            'check': cfg.check,
            'params': cfg.params.to_mapping(),
            'model': cfg.model.to_mapping(),
            'seed': cfg.seed,
            'samples': cfg.samples,
            'lhs': None, 'rhs': None, 'slack': None, 'stderr': None,
            'verdict': 'INCONCLUSIVE',
            'reason': {'error': type(exc).__name__, 'message': str(exc), **reason},
        }
    record['toolkit_version'] = common.TOOLKIT_VERSION
    record['config_hash'] = cfg.config_hash
    return record

# ==================== OUTPUT ====================

def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    try:
        with os.fdopen(fd, 'w', newline='') as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(results, out):
    """<out>.json holds the full records; <out>.csv gets one summary row per record."""
    if not results:
        raise ValueError("no results to emit")
    document = results[0] if len(results) == 1 else {'results': results}
    _atomic_write(f"{out}.json", ReportFormatter.format(document, 'json'))
    rows = "".join(ReportFormatter.format(r, 'csv') for r in results)
    _atomic_write(f"{out}.csv", ReportFormatter.csv_header() + rows)
    debug_log('app', f"Wrote {out}.json and {out}.csv")


def verdict_line(record):
    slack = record.get('slack')
    stderr = record.get('stderr')
    if record['verdict'] == 'INCONCLUSIVE':
        return f"INCONCLUSIVE {record['check']}: {record['reason'].get('message', '')}"
    return (f"{record['verdict']} {record['check']} slack={ReportFormatter.number(slack).strip(chr(34))} "
            f"stderr={ReportFormatter.number(stderr).strip(chr(34))}")

# ==================== CLI ====================

def build_parser():
    parser = argparse.ArgumentParser(prog='lftoolkit', description="Lorentz-Finsler transport checks")
    sub = parser.add_subparsers(dest='command', required=True)
    run = sub.add_parser('run', help="run one experiment config")
    run.add_argument('config')
    run.add_argument('--seed', type=int)
    run.add_argument('--samples', type=int)
    run.add_argument('--out')
    run.add_argument('--log-level', type=str.upper, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.log_level:
        common.set_log_level(args.log_level)
    try:
        cfg = load_config(args.config)
        overrides = {k: getattr(args, k) for k in ('seed', 'samples', 'out') if getattr(args, k) is not None}
        if overrides.get('samples') is not None and overrides['samples'] <= 0:
            raise ConfigError("samples must be positive", samples=overrides['samples'])
        cfg = with_hash(replace(cfg, **overrides))
        record = run_experiment(cfg)
    except ConfigError as exc:
        print(f"CONFIG ERROR {exc}", file=sys.stderr)
        return EXIT_CODES['CONFIG']

    emit_report([record], cfg.out)
    print(verdict_line(record))
    return EXIT_CODES[record['verdict']]


if __name__ == '__main__':
    sys.exit(main())
