import math

import numpy as np
import pytest

from common import CausalityError, DomainError, ParameterError
from finsler_core import (CausalKind, Covector, Vector, classify_vector, dual_norm, f_norm,
                          lagrangian_eval, legendre_inverse, legendre_map, metric_signature, metric_tensor,
                          q_hamiltonian, q_lagrangian, q_legendre_inverse, q_legendre_map,
                          reverse_structure, sample_future_timelike)

ORIGIN = np.zeros(2)


def vec(*comps):
    return Vector(ORIGIN, np.array(comps, dtype=float))


def test_minkowski_lagrangian_and_norm(minkowski):
    assert lagrangian_eval(minkowski, vec(2.0, 1.0)) == pytest.approx(-1.5)
    assert f_norm(minkowski, vec(2.0, 1.0)) == pytest.approx(math.sqrt(3.0))


def test_bogoslovsky_values(bogoslovsky):
    assert lagrangian_eval(bogoslovsky, vec(2.0, 1.0)) == pytest.approx(-0.5 * 3.0 ** 0.9, rel=1e-12)
    assert f_norm(bogoslovsky, vec(2.0, 1.0)) == pytest.approx(3.0 ** 0.45, rel=1e-12)


def test_classification(minkowski):
    assert classify_vector(minkowski, vec(1.0, 0.0)).future_timelike
    past = classify_vector(minkowski, vec(-1.0, 0.0))
    assert past.kind == CausalKind.TIMELIKE and not past.future_directed
    assert classify_vector(minkowski, vec(1.0, 1.0)).kind == CausalKind.LIGHTLIKE
    assert classify_vector(minkowski, vec(0.0, 1.0)).kind == CausalKind.SPACELIKE
    assert classify_vector(minkowski, vec(0.0, 0.0)).kind == CausalKind.ZERO


def test_f_norm_rejects_spacelike(minkowski):
    with pytest.raises(DomainError):
        f_norm(minkowski, vec(0.0, 1.0))


def test_metric_tensor(minkowski):
    np.testing.assert_allclose(metric_tensor(minkowski, vec(1.0, 0.2)), np.diag([-1.0, 1.0]), atol=1e-14)
    with pytest.raises(DomainError):
        metric_tensor(minkowski, vec(0.0, 0.0))


def test_bogoslovsky_metric_contracts_to_twice_lagrangian(bogoslovsky):
    v = vec(2.0, 0.5)
    g = metric_tensor(bogoslovsky, v)
    assert v.comps @ g @ v.comps == pytest.approx(2.0 * lagrangian_eval(bogoslovsky, v), rel=1e-10)


def test_legendre_round_trip(bogoslovsky):
    v = vec(2.0, 0.5)
    back = legendre_inverse(bogoslovsky, legendre_map(bogoslovsky, v))
    np.testing.assert_allclose(back.comps, v.comps, rtol=1e-10)
    assert dual_norm(bogoslovsky, legendre_map(bogoslovsky, v)) == pytest.approx(f_norm(bogoslovsky, v), rel=1e-10)


def test_legendre_inverse_outside_polar_cone(minkowski):
    with pytest.raises(CausalityError):
        legendre_inverse(minkowski, Covector(ORIGIN, np.array([1.0, 0.0])))


def test_q_lagrangian_conventions(minkowski):
    assert q_lagrangian(minkowski, vec(0.0, 0.0), 0.5) == 0.0
    assert q_lagrangian(minkowski, vec(-1.0, 0.0), 0.5) == math.inf
    assert q_lagrangian(minkowski, vec(4.0, 0.0), 0.5) == pytest.approx(-math.sqrt(4.0) / 0.5)
    with pytest.raises(ParameterError):
        q_lagrangian(minkowski, vec(1.0, 0.0), 1.5)


def test_q_hamiltonian_outside_cone_is_infinite(minkowski):
    assert q_hamiltonian(minkowski, Covector(ORIGIN, np.array([1.0, 0.0])), 0.5) == math.inf


def test_q_legendre_maps_are_inverse(minkowski):
    v = vec(1.5, 0.4)
    zeta = q_legendre_map(minkowski, v, 0.5)
    np.testing.assert_allclose(q_legendre_inverse(minkowski, zeta, 0.5).comps, v.comps, rtol=1e-10)


def test_reverse_structure_flips_time(minkowski):
    rev = reverse_structure(minkowski)
    assert classify_vector(rev, vec(-1.0, 0.0)).future_timelike
    assert lagrangian_eval(rev, vec(-2.0, -1.0)) == pytest.approx(-1.5)


def test_samples_are_future_timelike(de_sitter):
    rng = np.random.default_rng(3)
    for v in sample_future_timelike(de_sitter, [0.2, 0.1], rng, 20):
        assert classify_vector(de_sitter, v).future_timelike


@pytest.mark.parametrize('model', ['minkowski', 'minkowski3', 'weighted', 'bogoslovsky', 'de_sitter'])
def test_metric_is_lorentzian_on_timelike_samples(model, request):
    S = request.getfixturevalue(model)
    rng = np.random.default_rng(7)
    x = np.full(S.dim, 0.1)
    for v in sample_future_timelike(S, x, rng, 12):
        assert metric_signature(S, v) == (1, S.dim - 1)


def test_bogoslovsky_metric_matches_finite_difference_hessian(bogoslovsky):
    v = np.array([2.0, 0.5])
    h = 1e-4
    fd = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            ei, ej = h * np.eye(2)[i], h * np.eye(2)[j]
            fd[i, j] = (lagrangian_eval(bogoslovsky, vec(*(v + ei + ej))) - lagrangian_eval(bogoslovsky, vec(*(v + ei - ej)))
                        - lagrangian_eval(bogoslovsky, vec(*(v - ei + ej))) + lagrangian_eval(bogoslovsky, vec(*(v - ei - ej)))) / (4 * h * h)
    np.testing.assert_allclose(metric_tensor(bogoslovsky, vec(*v)), fd, atol=1e-6)


@pytest.mark.parametrize('q', [0.3, 0.5, 0.8])
def test_q_hamiltonian_closes_the_fenchel_young_gap(bogoslovsky, q):
    v = vec(2.0, 0.5)
    zeta = q_legendre_map(bogoslovsky, v, q)
    L_q = q_lagrangian(bogoslovsky, v, q)
    H_q = q_hamiltonian(bogoslovsky, zeta, q)
    assert L_q + H_q == pytest.approx(zeta.pair(v), rel=1e-9)
    assert zeta.pair(v) == pytest.approx(-f_norm(bogoslovsky, v) ** q, rel=1e-9)
    for w in (vec(1.5, 0.1), vec(3.0, -0.4), vec(1.0, 0.6)):
        assert q_lagrangian(bogoslovsky, w, q) + H_q >= zeta.pair(w) - 1e-10
    np.testing.assert_allclose(q_legendre_inverse(bogoslovsky, zeta, q).comps, v.comps, rtol=1e-9)
