import math

import numpy as np
import pytest

from common import CausalityError, ParameterError, SeparationError
from curvature_comparison import ComparisonParams
from distance import BoxRegion
from entropy_tcd import (Regime, brunn_minkowski_check, entropy_along_transport, entropy_estimate,
                         mass_estimate, regime_of, tcd_check, uniform_box_measure)
from measures_transport import linear_potential, quadratic_potential, transport_jacobian

UNIT = BoxRegion([0.0, 0.0], [1.0, 1.0])


@pytest.fixture
def box_measure(minkowski):
    return uniform_box_measure(minkowski, BoxRegion([0.0, 0.0], [2.0, 1.0]))


@pytest.fixture
def translation():
    return linear_potential([-1.0, 0.0])


def test_regime_of():
    assert regime_of(math.inf) is Regime.NINF
    assert regime_of(3.0) is Regime.NPOS
    assert regime_of(-2.0) is Regime.NNEG
    assert regime_of(0.0) is Regime.NZERO


# ==================== ENTROPIES ====================

def test_uniform_box_entropies(minkowski, box_measure):
    ent = entropy_estimate(minkowski, box_measure, 'Ent', samples=64)
    assert ent.value == pytest.approx(-math.log(2.0), abs=1e-12)
    renyi = entropy_estimate(minkowski, box_measure, 'RenyiN', N=2.0, samples=64)
    assert renyi.value == pytest.approx(-math.sqrt(2.0), abs=1e-12)
    esssup = entropy_estimate(minkowski, box_measure, 'Renyi0', samples=64)
    assert esssup.value == pytest.approx(0.5, abs=1e-12)
    assert esssup.lower_bound and not ent.lower_bound


def test_entropy_kind_errors(minkowski, box_measure):
    with pytest.raises(ParameterError):
        entropy_estimate(minkowski, box_measure, 'Shannon')
    with pytest.raises(ParameterError):
        entropy_estimate(minkowski, box_measure, 'RenyiN', N=1.5)


def test_uniform_box_has_unit_mass(de_sitter):
    mu = uniform_box_measure(de_sitter, BoxRegion([0.0, 0.0], [0.5, 1.0]))
    mass, _ = mass_estimate(de_sitter, mu, samples=64)
    assert mass == pytest.approx(1.0, rel=1e-12)


def test_entropy_along_translation(minkowski, box_measure, translation):
    moved = entropy_along_transport(minkowski, box_measure, translation, 0.5, 'Ent', samples=64)
    assert moved.value == pytest.approx(-math.log(2.0), abs=1e-9)
    start = entropy_along_transport(minkowski, box_measure, translation, 0.0, 'Renyi0', samples=64)
    assert start.value == pytest.approx(0.5, abs=1e-12)


def _squeeze_det(t, eps, x1):
    """det dF_t for u = -x0 + eps/2 x1^2 on Minkowski with q = 1/2."""
    s2 = (eps * x1) ** 2
    return 1.0 + t * eps * (1.0 + 2.0 * s2) * (1.0 - s2) ** -2.5


def test_entropy_along_quadratic_transport(minkowski):
    mu0 = uniform_box_measure(minkowski, UNIT)
    u = quadratic_potential(-1.0, 0.2)
    for x in ([0.1, 0.7], [0.5, 0.0], [0.9, 1.0]):
        assert transport_jacobian(minkowski, u, x, 0.6, 0.5) == pytest.approx(_squeeze_det(0.6, 0.2, x[1]), rel=1e-9)
    nodes = (np.arange(2000) + 0.5) / 2000
    exact = -float(np.mean(np.log(_squeeze_det(0.6, 0.2, nodes))))
    moved = entropy_along_transport(minkowski, mu0, u, 0.6, 'Ent', samples=4000, seed=9)
    assert abs(moved.value - exact) <= 6.0 * moved.stderr + 1e-12


# ==================== TCD ====================

@pytest.mark.parametrize('N', [math.inf, 3.0, -1.0, 0.0])
def test_translation_saturates_tcd_on_minkowski(minkowski, translation, N):
    mu0 = uniform_box_measure(minkowski, UNIT)
    report = tcd_check(minkowski, mu0, translation, ComparisonParams(K=0.0, N=N), samples=64, seed=5)
    assert report.regime is regime_of(N)
    assert report.mode == 'potential'
    assert report.slack == pytest.approx(0.0, abs=1e-9)
    assert report.holds
    if N == 3.0:
        assert set(report.extra) == {'N=6'}
    if N == -1.0:
        assert set(report.extra) == {'N=-0.5'}
    assert report.lower_bound == (N == 0.0)


def test_weighted_minkowski_curvature_bound(weighted, translation):
    mu0 = uniform_box_measure(weighted, UNIT)
    sharp = tcd_check(weighted, mu0, translation, ComparisonParams(K=0.5, N=math.inf), samples=64)
    assert sharp.slack == pytest.approx(0.0, abs=1e-9)
    assert sharp.holds
    too_strong = tcd_check(weighted, mu0, translation, ComparisonParams(K=1.0, N=math.inf), samples=64)
    assert too_strong.slack == pytest.approx(-0.0625, abs=1e-9)
    assert not too_strong.holds


def test_quadratic_potential_holds_tcd_with_room(minkowski):
    mu0 = uniform_box_measure(minkowski, UNIT)
    report = tcd_check(minkowski, mu0, quadratic_potential(-1.0, 0.2), ComparisonParams(K=0.0, N=math.inf),
                       samples=64, seed=5)
    assert report.mode == 'potential'
    assert report.slack > 0.0
    assert report.holds


def test_tcd_rejects_non_polar_potential(minkowski):
    mu0 = uniform_box_measure(minkowski, UNIT)
    with pytest.raises(CausalityError):
        tcd_check(minkowski, mu0, linear_potential([1.0, 0.0]), ComparisonParams(), samples=64)


def test_coupled_mode(minkowski, de_sitter):
    mu0 = uniform_box_measure(minkowski, UNIT)
    far = uniform_box_measure(minkowski, BoxRegion([4.0, 0.0], [5.0, 1.0]))
    report = tcd_check(minkowski, mu0, far, ComparisonParams(), samples=64)
    assert report.mode == 'coupled'
    assert report.rhs == pytest.approx(0.0, abs=1e-12)

    elsewhere = uniform_box_measure(minkowski, BoxRegion([0.0, 3.0], [1.0, 4.0]))
    with pytest.raises(SeparationError):
        tcd_check(minkowski, mu0, elsewhere, ComparisonParams(), samples=64)

    curved = uniform_box_measure(de_sitter, BoxRegion([0.0, 0.0], [0.2, 0.2]))
    with pytest.raises(ParameterError):
        tcd_check(de_sitter, curved, curved, ComparisonParams(), samples=64)

# ==================== BRUNN-MINKOWSKI ====================

A0 = BoxRegion([0.0, 0.0], [0.5, 0.5])
A1 = BoxRegion([3.0, 0.0], [4.0, 1.0])


def test_homothetic_boxes_saturate_brunn_minkowski(minkowski):
    report = brunn_minkowski_check(minkowski, A0, A1, 0.5, 0.0, 2.0, samples=512, seed=2)
    assert report.measure_Z == pytest.approx(0.5625, rel=1e-12)
    assert report.lhs == pytest.approx(0.75, rel=1e-12)
    assert report.rhs == pytest.approx(0.75, rel=1e-12)
    assert report.holds
    assert report.undecided == 0 and not report.lower_bound


@pytest.mark.parametrize('N', [math.inf, -1.0, 0.0])
def test_other_regimes_hold_with_room(minkowski, N):
    report = brunn_minkowski_check(minkowski, A0, A1, 0.5, 0.0, N, samples=512)
    assert report.slack > 0.01
    assert report.holds


def test_non_homothetic_boxes(minkowski):
    wide = BoxRegion([3.0, 0.0], [4.0, 2.0])
    report = brunn_minkowski_check(minkowski, A0, wide, 0.5, 0.0, 2.0, samples=512)
    assert report.measure_Z == pytest.approx(0.9375, rel=1e-12)
    assert report.slack > 0.0 and report.holds


def test_brunn_minkowski_guards(minkowski):
    with pytest.raises(ParameterError):
        brunn_minkowski_check(minkowski, A0, A1, 0.0, 0.0, 2.0, samples=64)
    with pytest.raises(CausalityError):
        brunn_minkowski_check(minkowski, A0, BoxRegion([0.2, 0.2], [0.8, 0.8]), 0.5, 0.0, 2.0, samples=64)
