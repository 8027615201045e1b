import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bubblered.geometry import (AntipodeSingularityError, Chart, CoincidentPointsError,
                                DegenerateCriticalPointError, KField, SpherePoint, chordal_sq,
                                conformal_factor, critical_point_at, exp_map, find_critical_points,
                                geodesic_distance, green_g0, gamma_n, k_eval_suite, stereo_lift,
                                stereo_project, tangent_frame, unit_ball_volume)
from bubblered.expansions import ladder_K, ladder_K_gradlap

from conftest import e

BETA = (0.6, 0.1, 0.2, 0.3, 0.4, 0.5)

vec6 = st.lists(st.floats(-1, 1, allow_nan=False), min_size=6, max_size=6).filter(
    lambda v: np.linalg.norm(v) > 0.1)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@given(vec6)
def test_frame_orthonormal(v):
    a = unit(v)
    E = tangent_frame(a)
    assert E.shape == (5, 6)
    assert np.allclose(E @ E.T, np.eye(5), atol=1e-12)
    assert np.allclose(E @ a, 0.0, atol=1e-12)


@given(vec6, vec6)
def test_stereo_roundtrip(v, w):
    a, x = unit(v), unit(w)
    if chordal_sq(-a, x) < 1e-6:
        return
    c = Chart(SpherePoint(a))
    y = stereo_project(c, x)
    assert np.allclose(stereo_lift(c, y).coords, x, atol=1e-9)


@given(vec6, st.lists(st.floats(-1.2, 1.2), min_size=5, max_size=5))
def test_exp_map_distance(v, t):
    a = unit(v)
    w = np.asarray(t) @ tangent_frame(a)
    x = exp_map(a, w)
    assert abs(np.linalg.norm(x) - 1) < 1e-12
    assert geodesic_distance(a, x) == pytest.approx(np.linalg.norm(w), abs=1e-9)


@given(vec6, vec6)
def test_geodesic_symmetric(v, w):
    a, b = unit(v), unit(w)
    assert geodesic_distance(a, b) == pytest.approx(geodesic_distance(b, a), abs=1e-12)
    assert 0 <= geodesic_distance(a, b) <= math.pi + 1e-12


def test_geodesic_near_coincident_precision():
    a = e(5, 0)
    x = exp_map(a, 1e-9 * e(5, 1))
    assert geodesic_distance(a, x) == pytest.approx(1e-9, rel=1e-6)


def test_antipode_rejected():
    c = Chart(SpherePoint(e(5, 0)))
    with pytest.raises(AntipodeSingularityError):
        stereo_project(c, -e(5, 0))


def test_conformal_factor_at_center():
    c = Chart(SpherePoint(e(5, 2)))
    assert conformal_factor(c, SpherePoint(e(5, 2))) == pytest.approx(1.0)
    # equator: tan(pi/4) = 1, z^2 = 4
    assert conformal_factor(c, SpherePoint(e(5, 0))) == pytest.approx(2.0 ** 1.5)


def test_green_function():
    n = 5
    a, x = SpherePoint(e(n, 0)), SpherePoint(e(n, 1))
    want = 2.0 ** ((2 - n) / 2) / (4 * n * (n - 1) * unit_ball_volume(n))
    assert green_g0(a, x) == pytest.approx(want, rel=1e-14)
    # gamma_n G^{2/(2-n)} is the chordal distance squared
    assert gamma_n(n) * green_g0(a, x) ** (2 / (2 - n)) == pytest.approx(2.0, rel=1e-13)
    with pytest.raises(CoincidentPointsError):
        green_g0(a, a)


@pytest.mark.parametrize("k", range(6))
def test_quadratic_critical_points(k):
    K = ladder_K(5)
    cp = critical_point_at(K, SpherePoint(e(5, k)))
    want = sorted(2 * (b - BETA[k]) for j, b in enumerate(BETA) if j != k)
    assert np.allclose(np.sort(cp.hessian_eigenvalues), want, atol=1e-12)
    assert cp.laplacian == pytest.approx(2 * (sum(BETA) - 6 * BETA[k]), abs=1e-12)
    assert cp.value == pytest.approx(1 + BETA[k])


def test_find_critical_points_quadratic():
    cps = find_critical_points(ladder_K(5))
    assert len(cps) == 12
    assert [c.morse_index for c in cps[::2]] == [5, 4, 3, 2, 1, 0]
    assert np.allclose(cps[0].location.coords, e(5, 0))
    assert np.allclose(cps[1].location.coords, -e(5, 0))


def test_degenerate_rejected():
    with pytest.raises(DegenerateCriticalPointError):
        critical_point_at(KField.constant(5), SpherePoint(e(5, 0)))


def _fd_suite(K, x, h=1e-4):
    E = tangent_frame(x)
    f = lambda y: float(K.values(y)[0])
    g = np.array([(f(exp_map(x, h * E[i])) - f(exp_map(x, -h * E[i]))) / (2 * h) for i in range(5)])
    lap = sum((f(exp_map(x, h * E[i])) - 2 * f(x) + f(exp_map(x, -h * E[i]))) / h ** 2 for i in range(5))
    return E, g, lap


@settings(max_examples=25, deadline=None)
@given(vec6)
def test_suite_matches_finite_differences(v):
    x = unit(v)
    for K in (ladder_K(5), ladder_K_gradlap(5)):
        E, g, lap = _fd_suite(K, x)
        s = k_eval_suite(K, x, E)
        assert np.allclose(s.grad, g, atol=1e-7)
        assert s.laplacian == pytest.approx(lap, abs=1e-5)


def test_grad_laplacian_of_quadratic():
    # for ambient quadratics grad Lap K = -2(n+1) grad K
    K = ladder_K(5)
    x = unit([0.3, -0.2, 0.5, 0.1, 0.7, -0.4])
    s = k_eval_suite(K, x)
    assert np.allclose(s.grad_laplacian, -12 * s.grad, atol=1e-12)


def test_kfield_json_roundtrip():
    for K in (ladder_K(5), ladder_K_gradlap(5)):
        K2 = KField.from_json(K.to_json())
        X = np.array([unit([1, 2, 3, 4, 5, 6]), unit([-1, 0, 2, 0, 1, 0])])
        assert np.allclose(K.values(X), K2.values(X), rtol=1e-15)


def test_kfield_invalid_monomial():
    with pytest.raises(ValueError):
        KField.polynomial(5, 1.0, {(5, 0, 0, 0, 0, 0): 1.0})
