import math

import numpy as np
import pytest

from common import CausalityError, InfeasibleCouplingError, ParameterError, SizeError
from measures_transport import (DiscreteMeasure, brute_force_coupling, cyclical_monotonicity_check,
                                displacement_interpolate, dual_pair, linear_potential, lq_distance,
                                measures_reverse_triangle, optimal_coupling_lp, potential_from_mapping,
                                q_geodesic_defect, q_separation_check, quadratic_potential, transport_batch,
                                transport_jacobian, transport_map_from_potential)

Q = 0.5


@pytest.fixture
def pair():
    mu = DiscreteMeasure.uniform([[0.0, 0.0], [0.0, 1.0]])
    nu = DiscreteMeasure.uniform([[3.0, 0.0], [3.0, 1.0]])
    return mu, nu


def test_measure_validation():
    with pytest.raises(ParameterError):
        DiscreteMeasure([[0.0, 0.0], [1.0, 0.0]], [0.5, 0.6])
    with pytest.raises(ParameterError):
        DiscreteMeasure([[0.0, 0.0], [0.0, 0.0]], [0.5, 0.5])
    with pytest.raises(ParameterError):
        DiscreteMeasure([[0.0, 0.0], [1.0, 0.0]], [1.5, -0.5])
    mu = DiscreteMeasure.normalized([[0.0, 0.0], [1.0, 0.0]], [1.0, 3.0])
    np.testing.assert_allclose(mu.weights, [0.25, 0.75])


def test_lp_matches_brute_force(minkowski, pair):
    mu, nu = pair
    lp = optimal_coupling_lp(minkowski, mu, nu, Q)
    brute = brute_force_coupling(minkowski, mu, nu, Q)
    assert lp.cost_q == pytest.approx(3.0, rel=1e-9)
    assert brute.cost_q == pytest.approx(lp.cost_q, rel=1e-9)
    np.testing.assert_allclose(lp.table, [[0.5, 0.0], [0.0, 0.5]], atol=1e-9)
    assert lp.marginal_error() < 1e-9
    assert lp.chronological
    assert sorted(lp.support_pairs(1e-9)) == [(0, 0), (1, 1)]


def test_no_causal_coupling(minkowski):
    mu = DiscreteMeasure.uniform([[0.0, 0.0]])
    nu = DiscreteMeasure.uniform([[0.0, 5.0]])
    with pytest.raises(InfeasibleCouplingError):
        optimal_coupling_lp(minkowski, mu, nu, Q)
    assert lq_distance(minkowski, mu, nu, Q) == -math.inf


def test_unbalanced_causal_pairs_are_infeasible(minkowski):
    mu = DiscreteMeasure.uniform([[0.0, 0.0], [0.0, 5.0]])
    nu = DiscreteMeasure.uniform([[1.0, 0.0], [1.0, 0.2]])
    assert lq_distance(minkowski, mu, nu, Q) == -math.inf


def test_brute_force_limits(minkowski):
    atoms = [[0.0, float(k)] for k in range(9)]
    mu = DiscreteMeasure.uniform(atoms)
    nu = DiscreteMeasure.uniform([[20.0, float(k)] for k in range(9)])
    with pytest.raises(SizeError):
        brute_force_coupling(minkowski, mu, nu, Q)
    with pytest.raises(ParameterError):
        optimal_coupling_lp(minkowski, mu, nu, 1.0)


def test_cyclical_monotonicity(minkowski, pair):
    mu, nu = pair
    good = [(mu.atoms[0], nu.atoms[0]), (mu.atoms[1], nu.atoms[1])]
    swapped = [(mu.atoms[0], nu.atoms[1]), (mu.atoms[1], nu.atoms[0])]
    assert cyclical_monotonicity_check(minkowski, good, Q) >= -1e-12
    assert cyclical_monotonicity_check(minkowski, swapped, Q) < 0.0
    assert cyclical_monotonicity_check(minkowski, [], Q) == 0.0


def test_dual_pair_closes_the_gap(minkowski, pair):
    mu, nu = pair
    duals = dual_pair(minkowski, mu, nu, Q)
    assert abs(duals.gap) < 1e-8
    sep = np.array([[3.0, math.sqrt(8.0)], [math.sqrt(8.0), 3.0]])
    cost = sep ** Q / Q
    assert np.all(duals.u_vals[:, None] + duals.v_vals[None, :] >= cost - 1e-9)


def test_q_separation(minkowski, pair):
    mu, nu = pair
    report = q_separation_check(minkowski, mu, nu)
    assert report.separated
    assert report.min_separation == pytest.approx(math.sqrt(8.0))
    far = DiscreteMeasure.uniform([[3.0, 0.0], [1.0, 4.0]])
    report = q_separation_check(minkowski, mu, far)
    assert not report.separated and report.min_separation == -math.inf


def test_displacement_interpolation(minkowski, pair):
    mu, nu = pair
    coupling = optimal_coupling_lp(minkowski, mu, nu, Q)
    mid = displacement_interpolate(minkowski, coupling, 0.5)
    np.testing.assert_allclose(mid.atoms, [[1.5, 0.0], [1.5, 1.0]], atol=1e-12)
    np.testing.assert_allclose(mid.weights, [0.5, 0.5], atol=1e-9)
    start = displacement_interpolate(minkowski, coupling, 0.0)
    np.testing.assert_allclose(start.atoms, mu.atoms)


def test_measures_reverse_triangle_is_tight_on_geodesics(minkowski, pair):
    mu, nu = pair
    assert measures_reverse_triangle(minkowski, mu, nu, 0.5, Q) == pytest.approx(0.0, abs=1e-9)


def test_translation_transport(minkowski):
    u = linear_potential([-1.0, 0.0])
    X = np.array([[0.0, 0.0], [0.3, -0.2], [1.0, 0.5]])
    Y, dets, speeds = transport_batch(minkowski, u, X, 0.5, Q, with_speed=True)
    np.testing.assert_allclose(Y, X + [0.5, 0.0], atol=1e-9)
    np.testing.assert_allclose(dets, 1.0, atol=1e-9)
    np.testing.assert_allclose(speeds, 1.0, atol=1e-9)


def test_translation_speed_scales_with_gradient(minkowski):
    u = linear_potential([-2.0, 0.0])
    Y, _, speeds = transport_batch(minkowski, u, np.zeros((1, 2)), 1.0, Q, with_speed=True)
    np.testing.assert_allclose(Y[0], [0.25, 0.0], atol=1e-9)
    assert speeds[0] == pytest.approx(0.25, rel=1e-9)


def test_transport_rejects_non_polar_gradient(minkowski):
    u = linear_potential([1.0, 0.0])
    with pytest.raises(CausalityError):
        transport_batch(minkowski, u, np.zeros((2, 2)), 0.5, Q)
    with pytest.raises(CausalityError):
        transport_map_from_potential(minkowski, u, [0.0, 0.0], 0.5, Q)


def test_transport_jacobian(minkowski):
    u = quadratic_potential(-1.0, 0.2)
    assert transport_jacobian(minkowski, u, [0.0, 0.0], 0.0, Q) == 1.0
    assert transport_jacobian(minkowski, linear_potential([-1.0, 0.0]), [0.0, 0.0], 0.7, Q) == \
        pytest.approx(1.0, abs=1e-9)


def test_potential_from_mapping():
    u = potential_from_mapping({'kind': 'quadratic', 'a': -1.0, 'eps': 0.5})
    np.testing.assert_allclose(u.gradient([0.0, 2.0]), [-1.0, 1.0])
    assert u.to_mapping() == {'kind': 'quadratic', 'a': -1.0, 'eps': 0.5}
    with pytest.raises(ParameterError):
        potential_from_mapping({'kind': 'cubic'})


def test_quadratic_transport_jacobian_matches_finite_differences(minkowski):
    u = quadratic_potential(-1.0, 0.2)
    x, t, h = np.array([0.3, 0.6]), 0.7, 1e-4
    columns = []
    for j in range(2):
        step = h * np.eye(2)[j]
        columns.append((transport_map_from_potential(minkowski, u, x + step, t, Q)
                        - transport_map_from_potential(minkowski, u, x - step, t, Q)) / (2 * h))
    fd = np.linalg.det(np.column_stack(columns))
    assert transport_jacobian(minkowski, u, x, t, Q) == pytest.approx(fd, rel=1e-6)


def _random_pair(seed, spread=1.0):
    rng = np.random.default_rng(seed)
    mu = DiscreteMeasure.uniform(rng.uniform(0.0, 1.0, (4, 2)))
    nu = DiscreteMeasure.uniform(np.column_stack([rng.uniform(3.0, 4.0, 4), rng.uniform(0.0, spread, 4)]))
    return mu, nu


@pytest.mark.parametrize('seed', range(6))
def test_lp_matches_brute_force_on_random_instances(minkowski, bogoslovsky, seed):
    mu, nu = _random_pair(seed)
    for S in (minkowski, bogoslovsky):
        for q in (0.3, Q, 0.9):
            lp = optimal_coupling_lp(S, mu, nu, q)
            assert brute_force_coupling(S, mu, nu, q).cost_q == pytest.approx(lp.cost_q, rel=1e-9)
            assert lp.marginal_error() < 1e-9


@pytest.mark.parametrize('seed', range(6))
def test_lp_and_brute_force_agree_on_mixed_causality(minkowski, seed):
    mu, nu = _random_pair(100 + seed, spread=6.0)
    try:
        lp = optimal_coupling_lp(minkowski, mu, nu, Q)
    except InfeasibleCouplingError:
        with pytest.raises(InfeasibleCouplingError):
            brute_force_coupling(minkowski, mu, nu, Q)
        return
    assert brute_force_coupling(minkowski, mu, nu, Q).cost_q == pytest.approx(lp.cost_q, rel=1e-9)


@pytest.mark.parametrize('seed', range(4))
def test_interpolation_is_a_q_geodesic(minkowski, seed):
    mu, nu = _random_pair(seed)
    coupling = optimal_coupling_lp(minkowski, mu, nu, Q)
    for t in (0.3, 0.5):
        mu_t = displacement_interpolate(minkowski, coupling, t)
        assert lq_distance(minkowski, mu, mu_t, Q) == pytest.approx(t * coupling.cost_q, rel=1e-8)
        assert lq_distance(minkowski, mu_t, nu, Q) == pytest.approx((1.0 - t) * coupling.cost_q, rel=1e-8)
        assert q_geodesic_defect(minkowski, mu, nu, t, Q) < 1e-8


def test_q_geodesic_defect_guards(minkowski, pair):
    mu, nu = pair
    with pytest.raises(ParameterError):
        q_geodesic_defect(minkowski, mu, nu, 1.0, Q)
    with pytest.raises(InfeasibleCouplingError):
        q_geodesic_defect(minkowski, mu, DiscreteMeasure.uniform([[0.0, 5.0]]), 0.5, Q)
