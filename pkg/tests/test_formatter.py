import math

import numpy as np
import pytest

from formatter import CSV_COLUMNS, ReportFormatter


def _record(**overrides):
    record = {
        'check': 'tcd',
        'regime': 'Ninf',
        'params': {'K': 0.0, 'N': math.inf, 'q': 0.5, 't': 0.5},
        'model': {'name': 'minkowski', 'dim': 2, 'params': {}},
        'lhs': -1.0,
        'rhs': -1.0,
        'slack': 0.0,
        'stderr': 0.0,
        'samples': 64,
        'seed': 7,
        'verdict': 'PASS',
    }
    record.update(overrides)
    return record


def test_number_is_fixed_precision():
    assert ReportFormatter.number(1.0) == "1.000000000000e+00"
    assert ReportFormatter.number(np.float64(-0.0625)) == "-6.250000000000e-02"
    assert ReportFormatter.number(math.inf) == '"inf"'
    assert ReportFormatter.number(-math.inf) == '"-inf"'
    assert ReportFormatter.number(math.nan) == '"nan"'


def test_json_is_sorted_and_stable():
    text = ReportFormatter.format(_record(details={'b': True, 'a': [1, 2.5]}), 'json')
    assert text.endswith("}\n")
    keys = [line.strip().split('"')[1] for line in text.splitlines() if line.startswith('  "')]
    assert keys == sorted(keys)
    assert '"N": "inf"' in text
    assert '"b": true' in text
    assert '"params": {}' in text
    assert text == ReportFormatter.format(_record(details={'a': [1, 2.5], 'b': True}), 'json')


def test_csv_row():
    assert ReportFormatter.csv_header() == ",".join(CSV_COLUMNS) + "\n"
    cells = ReportFormatter.format(_record(regime=None), 'CSV').rstrip("\n").split(',')
    row = dict(zip(CSV_COLUMNS, cells))
    assert row['model'] == 'minkowski'
    assert row['regime'] == ''
    assert row['N'] == 'inf'
    assert row['slack'] == "0.000000000000e+00"
    assert row['samples'] == '64'
    assert row['verdict'] == 'PASS'


def test_unknown_style():
    with pytest.raises(ValueError, match="xml"):
        ReportFormatter.format(_record(), "xml")
