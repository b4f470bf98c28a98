import math

import numpy as np
import pytest

from common import NoMaximizerError, ParameterError
from distance import (BoxRegion, Relation, SeparationMethod, ball_region, causal_relation,
                      contraction_jacobian, intermediate_point, lorentzianity_defect, lq_separation,
                      reverse_triangle_slack, separation_matrix, time_separation, z_t_membership,
                      z_t_membership_many)


def test_minkowski_separation(minkowski):
    result = time_separation(minkowski, [0.0, 0.0], [2.0, 1.0])
    assert result.value == pytest.approx(math.sqrt(3.0))
    assert result.method == SeparationMethod.ANALYTIC
    shot = time_separation(minkowski, [0.0, 0.0], [2.0, 1.0], method='shooting')
    assert shot.value == pytest.approx(math.sqrt(3.0), rel=1e-9)
    assert not shot.ambiguous


def test_separation_conventions(minkowski):
    assert time_separation(minkowski, [0.0, 0.0], [0.0, 0.0]).value == 0.0
    unrelated = time_separation(minkowski, [0.0, 0.0], [0.0, 1.0])
    assert unrelated.value == -math.inf and unrelated.relation == Relation.UNRELATED
    assert causal_relation(minkowski, [0.0, 0.0], [-1.0, 0.0]) == Relation.UNRELATED
    assert lq_separation(minkowski, [0.0, 0.0], [4.0, 0.0], 0.5) == pytest.approx(4.0)


def test_bogoslovsky_separation(bogoslovsky):
    assert time_separation(bogoslovsky, [0.0, 0.0], [2.0, 1.0]).value == pytest.approx(3.0 ** 0.45, rel=1e-12)


def test_de_sitter_separation_by_shooting(de_sitter):
    result = time_separation(de_sitter, [0.0, 0.0], [1.0, 0.0])
    assert result.method == SeparationMethod.SHOOTING
    assert result.value == pytest.approx(1.0, rel=1e-6)


def test_separation_matrix(minkowski):
    sep = separation_matrix(minkowski, [[0.0, 0.0], [1.0, 0.0]], [[2.0, 0.0], [0.0, 3.0]])
    assert sep[0, 0] == pytest.approx(2.0) and sep[1, 0] == pytest.approx(1.0)
    assert sep[0, 1] == -math.inf


def test_reverse_triangle(minkowski):
    assert reverse_triangle_slack(minkowski, [0.0, 0.0], [1.0, 0.3], [2.0, 0.0]) > 0.0
    assert reverse_triangle_slack(minkowski, [0.0, 0.0], [1.0, 0.0], [2.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    assert reverse_triangle_slack(minkowski, [0.0, 0.0], [0.0, 1.0], [2.0, 0.0]) == math.inf


def test_intermediate_point_and_jacobian(minkowski, de_sitter):
    np.testing.assert_allclose(intermediate_point(minkowski, [0.0, 0.0], [2.0, 1.0], 0.5), [1.0, 0.5])
    assert contraction_jacobian(minkowski, [0.0, 0.0], [2.0, 1.0], 0.5) == pytest.approx(0.25)
    with pytest.raises(NoMaximizerError):
        intermediate_point(minkowski, [0.0, 0.0], [0.0, 1.0], 0.5)
    mid = intermediate_point(de_sitter, [0.0, 0.0], [1.0, 0.0], 0.5)
    np.testing.assert_allclose(mid, [0.5, 0.0], atol=1e-6)


def test_z_t_membership_on_boxes(minkowski):
    A = BoxRegion([0.0, 0.0], [0.5, 0.5])
    B = BoxRegion([3.0, 0.0], [4.0, 1.0])
    assert z_t_membership(minkowski, [1.9, 0.4], A, B, 0.5) is True
    assert z_t_membership(minkowski, [1.9, 3.0], A, B, 0.5) is False
    hits = z_t_membership_many(minkowski, np.array([[1.9, 0.4], [1.9, 3.0]]), A, B, 0.5)
    assert bool(hits[0]) and not bool(hits[1])


def test_z_t_membership_with_finite_sets(minkowski):
    A = np.array([[0.0, 0.0]])
    B = np.array([[2.0, 0.0], [2.0, 5.0]])
    assert z_t_membership(minkowski, [1.0, 0.0], A, B, 0.5) is True
    assert z_t_membership(minkowski, [1.0, 2.5], A, B, 0.5) is False


def test_z_t_membership_needs_straight_geodesics(de_sitter):
    with pytest.raises(ParameterError):
        z_t_membership(de_sitter, [0.5, 0.0], np.zeros((1, 2)), np.array([[1.0, 0.0]]), 0.5)


def test_ball_region():
    ball = ball_region([1.0, 1.0], 0.5)
    assert ball.contains([[1.0, 1.2]])[0]
    assert not ball.contains([[1.4, 1.4]])[0]


def test_lorentzianity_defect(minkowski, bogoslovsky):
    assert lorentzianity_defect(minkowski, [0.0, 0.0], 20, seed=1) < 1e-12
    assert lorentzianity_defect(bogoslovsky, [0.0, 0.0], 20, seed=1) > 0.01
    with pytest.raises(ParameterError):
        lorentzianity_defect(minkowski, [0.0, 0.0], 5)


@pytest.mark.parametrize('model', ['minkowski', 'bogoslovsky'])
def test_shooting_matches_the_analytic_sweep(model, request):
    S = request.getfixturevalue(model)
    rng = np.random.default_rng(42)
    X = rng.uniform(-1.0, 1.0, (200, 2))
    dt = rng.uniform(0.5, 3.0, 200)
    D = np.column_stack([dt, rng.uniform(-0.7, 0.7, 200) * dt])
    for x, d in zip(X, D):
        analytic = time_separation(S, x, x + d, method='analytic').value
        shot = time_separation(S, x, x + d, method='shooting', steps=32).value
        assert shot == pytest.approx(analytic, rel=1e-8)
