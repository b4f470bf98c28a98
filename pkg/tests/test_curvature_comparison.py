import math

import numpy as np
import pytest

from common import DomainError, ParameterError
from curvature_comparison import (ComparisonParams, check_dimension_parameter, mcp_check,
                                  ricci_lower_bound_scan, s_kappa, tau_coefficient, weight_consistency,
                                  weighted_ricci)
from distance import BoxRegion
from finsler_core import Vector
from geometry_dynamics import ricci


def test_s_kappa_branches():
    assert s_kappa(0.0, 0.7) == 0.7
    assert s_kappa(1.0, math.pi / 2) == pytest.approx(1.0)
    assert s_kappa(-1.0, 1.0) == pytest.approx(math.sinh(1.0))
    with pytest.raises(DomainError):
        s_kappa(1.0, 4.0)


def test_tau_coefficient_values():
    assert tau_coefficient(1.0, 2.0, 0.5, 1.0) == pytest.approx(0.533733, abs=1e-6)
    assert tau_coefficient(0.0, 3.0, 0.3, 2.0) == 0.3
    assert tau_coefficient(-1.0, 3.0, 0.5, 0.0) == 0.5
    assert tau_coefficient(1.0, 2.0, 1.0, 1.0) == 1.0
    assert tau_coefficient(-1.0, -1.0, 0.5, 5.0) == math.inf


def test_tau_coefficient_errors():
    with pytest.raises(DomainError):
        tau_coefficient(1.0, 2.0, 0.5, 4.0)
    with pytest.raises(ParameterError):
        tau_coefficient(0.0, math.inf, 0.5, 1.0)
    with pytest.raises(ParameterError):
        tau_coefficient(0.0, 0.5, 0.5, 1.0)
    with pytest.raises(ParameterError):
        tau_coefficient(0.0, 2.0, 1.5, 1.0)


def test_dimension_parameter():
    assert check_dimension_parameter(-1.0, 2) == -1.0
    assert check_dimension_parameter(0.0, 2) == 0.0
    with pytest.raises(ParameterError):
        check_dimension_parameter(1.5, 2)
    with pytest.raises(ParameterError):
        ComparisonParams(q=1.0).validate(2)
    assert ComparisonParams(N=4.0).validate(2).to_mapping()['N'] == 4.0


def test_weighted_ricci_on_weighted_minkowski(weighted):
    v = Vector([0.2, 0.0], [1.0, 0.0])
    assert weighted_ricci(weighted, v, math.inf) == pytest.approx(0.5, abs=1e-10)
    assert weighted_ricci(weighted, v, 4.0) == pytest.approx(0.495, abs=1e-10)
    assert weighted_ricci(weighted, v, 2.0) == -math.inf
    assert weighted_ricci(weighted, Vector([0.0, 0.0], [1.0, 0.0]), 2.0) == pytest.approx(0.5, abs=1e-10)


def test_weight_consistency(minkowski, bogoslovsky):
    assert weight_consistency(minkowski, [0.0, 0.0], samples=8) < 1e-12
    assert weight_consistency(bogoslovsky, [0.0, 0.0], samples=8) < 1e-8


def test_ricci_lower_bound_scan(de_sitter, minkowski):
    assert ricci_lower_bound_scan(de_sitter, [[0.0, 0.0], [0.3, 0.1]], math.inf, samples=4) == \
        pytest.approx(-1.0, rel=1e-6)
    assert ricci_lower_bound_scan(minkowski, [[0.0, 0.0]], 3.0, samples=4) == pytest.approx(0.0, abs=1e-12)


def test_mcp_equality_on_minkowski(minkowski):
    box = BoxRegion([3.0, -0.5], [4.0, 0.5])
    report = mcp_check(minkowski, [0.0, 0.0], box, 0.5, 0.0, 2.0, samples=256, seed=3)
    assert report.tau_min == pytest.approx(0.25)
    assert report.measure_B == pytest.approx(1.0)
    assert report.slack == pytest.approx(0.0, abs=1e-12)
    assert report.holds


def test_mcp_needs_finite_n(minkowski):
    box = BoxRegion([3.0, -0.5], [4.0, 0.5])
    with pytest.raises(ParameterError):
        mcp_check(minkowski, [0.0, 0.0], box, 0.5, 0.0, math.inf, samples=64)


def test_weighted_mcp_at_twice_the_dimension(weighted):
    box = BoxRegion([0.8, -0.1], [1.0, 0.1])
    mild = mcp_check(weighted, [0.0, 0.0], box, 0.5, 0.3, 4.0, samples=512, seed=4)
    assert mild.slack > 0.0 and mild.holds
    strong = mcp_check(weighted, [0.0, 0.0], box, 0.5, 27.0, 4.0, samples=512, seed=4)
    assert strong.tau_min > 1.0
    assert not strong.holds


def test_tau_coefficient_increases_with_k():
    taus = [tau_coefficient(K, 3.0, 0.5, 1.0) for K in (-2.0, -1.0, 0.0, 1.0, 2.0)]
    assert all(a < b for a, b in zip(taus, taus[1:]))


def test_weighted_ricci_is_ordered_in_n(weighted):
    v = Vector([0.2, 0.0], [1.0, 0.0])
    values = [weighted_ricci(weighted, v, N) for N in (2.0, 3.0, 10.0, math.inf, -1.0)]
    assert values[0] == -math.inf
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[1] == pytest.approx(0.49, abs=1e-10)
    assert values[4] == pytest.approx(0.5 + 0.01 / 3.0, abs=1e-10)


def test_ricci_is_homogeneous_of_degree_two(de_sitter, weighted):
    v = Vector([0.2, 0.1], [1.2, 0.3])
    assert ricci(de_sitter, v.scaled(2.5)) == pytest.approx(6.25 * ricci(de_sitter, v), rel=1e-9)
    w = Vector([0.2, 0.0], [1.0, 0.4])
    for N in (4.0, math.inf, -1.0):
        assert weighted_ricci(weighted, w.scaled(2.5), N) == pytest.approx(6.25 * weighted_ricci(weighted, w, N),
                                                                           rel=1e-9)
