import math

import numpy as np
import pytest

from bubblered.bubbles import Configuration, bubble_eval
from bubblered.constants import ToleranceNotReachedError, build_table, sphere_area
from bubblered.geometry import tangent_frame
from bubblered.quadrature import QuadratureSpec, ball_rule, integrate, integrate_with_error, sphere_rule

from conftest import e

N = 5
AREA = sphere_area(N)


def configs():
    yield Configuration(N, 0.0, [1.0], [e(N, 0)], [100.0])
    yield Configuration(N, 0.0, [1.0, 1.0], [e(N, 0), -e(N, 0)], [50.0, 80.0])
    yield Configuration(N, 0.0, [1.0, 1.0, 1.0], [e(N, 0), e(N, 3), -e(N, 0)], [30.0, 30.0, 30.0])


@pytest.mark.parametrize("cfg", list(configs())[:2], ids=["q1", "q2"])
def test_polynomial_exactness(cfg):
    assert integrate(lambda X: np.ones(len(X)), cfg) == pytest.approx(AREA, rel=1e-12)
    got = integrate(lambda X: X ** 2, cfg)
    assert np.allclose(got, AREA / (N + 1), rtol=1e-12)
    assert np.allclose(integrate(lambda X: X[:, :3] * X[:, 3:], cfg), 0.0, atol=1e-12)


def test_smooth_integrand_three_patches():
    # blending across two dense angles limits smooth O(1) integrands to ~1e-5;
    # the estimate must still bound the actual error
    cfg = list(configs())[2]
    res = integrate_with_error(lambda X: np.ones(len(X)), cfg)
    actual = abs(res.value - AREA)
    assert actual < 1e-4 * AREA
    assert res.error >= actual


def test_bubble_integrand_three_patches():
    cfg = list(configs())[2]
    t = build_table(N)
    bs = [cfg.bubble(i) for i in range(3)]
    f = lambda X: sum(bubble_eval(b, X) ** (2 * N / (N - 2)) for b in bs)
    assert integrate(f, cfg) == pytest.approx(3 * t.cbar0, rel=1e-10)


def test_bubble_critical_power():
    # int phi^{2n/(n-2)} = cbar0 for every lam on the round sphere
    t = build_table(N)
    for lam in (10.0, 200.0):
        cfg = Configuration(N, 0.0, [1.0], [e(N, 2)], [lam])
        b = cfg.bubble(0)
        val = integrate(lambda X: bubble_eval(b, X) ** (2 * N / (N - 2)), cfg)
        assert val == pytest.approx(t.cbar0, rel=1e-12)


def test_thread_determinism():
    cfg = list(configs())[2]
    b = cfg.bubble(1)
    f = lambda X: bubble_eval(b, X) ** 3 * (1 + X[:, 0])
    vals = [integrate_with_error(f, cfg, QuadratureSpec(threads=t)).value for t in (1, 2, 3)]
    assert vals[0] == vals[1] == vals[2]


def test_sphere_rule_weights():
    for dense in (0, 1, 2):
        X, W = sphere_rule(N, dense, 12, 8)
        assert W.sum() == pytest.approx(sphere_area(N - 1), rel=1e-13)
        assert np.allclose(np.linalg.norm(X, axis=1), 1.0)


@pytest.mark.parametrize("radius", [0.3, math.pi / 2, math.pi])
def test_ball_rule_volume(radius):
    a = e(N, 1)
    X, W = ball_rule(a, tangent_frame(a), radius, 80.0, QuadratureSpec(), 6)
    from scipy.integrate import quad
    want = sphere_area(N - 1) * quad(lambda t: math.sin(t) ** (N - 1), 0, radius)[0]
    assert W.sum() == pytest.approx(want, rel=1e-12)
    assert np.all(X @ a >= math.cos(radius) - 1e-12)


def test_tolerance_failure():
    cfg = list(configs())[0]
    b = cfg.bubble(0)
    with pytest.raises(ToleranceNotReachedError):
        integrate(lambda X: bubble_eval(b, X) ** 3, cfg, QuadratureSpec(patch_order=3, shells=1, tol=1e-15))


def test_spec_validation_and_json():
    with pytest.raises(ValueError):
        QuadratureSpec(tol=0)
    with pytest.raises(ValueError):
        QuadratureSpec.from_json({"bogus": 1})
    s = QuadratureSpec(patch_order=16)
    assert QuadratureSpec.from_json(s.to_json()) == s
    assert s.coarsened().patch_order < s.patch_order
