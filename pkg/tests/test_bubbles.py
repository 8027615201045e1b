import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bubblered.bubbles import (BubbleParams, Configuration, ConfigurationError, alpha_K_tau,
                               bubble_eval, interaction_eps, interaction_eps_derivatives, phi_fields)
from bubblered.geometry import SpherePoint, exp_map, tangent_frame

from conftest import e

unit6 = st.lists(st.floats(-1, 1, allow_nan=False), min_size=6, max_size=6).filter(
    lambda v: np.linalg.norm(v) > 0.1).map(lambda v: np.asarray(v) / np.linalg.norm(v))
lams = st.floats(1.5, 300.0)


def bp(x, lam):
    return BubbleParams(SpherePoint(x), lam)


def test_peak_value():
    for n in (5, 6, 8):
        b = bp(e(n, 0), 40.0)
        assert bubble_eval(b, e(n, 0)) == pytest.approx(40.0 ** ((n - 2) / 2), rel=1e-14)


def test_antipode_value():
    # 1 + (lam^2 - 1/4) * 4 = 4 lam^2
    b = bp(e(5, 0), 10.0)
    assert bubble_eval(b, -e(5, 0)) == pytest.approx((10.0 / 400.0) ** 1.5, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(unit6, unit6, lams)
def test_phi2_is_minus_lam_dlam(a, x, lam):
    h = 1e-6
    up = bubble_eval(bp(a, lam * math.exp(h)), x)
    dn = bubble_eval(bp(a, lam * math.exp(-h)), x)
    fd = -(up - dn) / (2 * h)
    got = phi_fields(bp(a, lam), 2, x)
    assert got == pytest.approx(fd, rel=1e-6, abs=1e-9 * bubble_eval(bp(a, lam), x) + 1e-300)


@settings(max_examples=20, deadline=None)
@given(unit6, unit6, st.floats(1.5, 30.0))
def test_phi3_is_scaled_center_gradient(a, x, lam):
    E = tangent_frame(a)
    h = 1e-6
    fd = np.array([(bubble_eval(bp(exp_map(a, h * E[k]), lam), x)
                    - bubble_eval(bp(exp_map(a, -h * E[k]), lam), x)) / (2 * h) for k in range(5)]) / lam
    got = phi_fields(bp(a, lam), 3, x, E)
    scale = bubble_eval(bp(a, lam), a)
    assert np.allclose(got, fd, atol=1e-6 * scale, rtol=1e-5)


@given(unit6, unit6, lams, lams)
def test_eps_symmetric(a, b, li, lj):
    assert interaction_eps(bp(a, li), bp(b, lj)) == pytest.approx(interaction_eps(bp(b, lj), bp(a, li)),
                                                                  rel=1e-13)


def test_eps_decay():
    # at fixed distance eps ~ (lam_i lam_j D)^{(2-n)/2}
    a, b = e(5, 0), e(5, 1)
    r = [interaction_eps(bp(a, L), bp(b, L)) * (L * L * 2.0) ** 1.5 for L in (100, 1000, 10000)]
    assert r[-1] == pytest.approx(1.0, rel=1e-7)
    assert abs(r[0] - 1) > abs(r[1] - 1) > abs(r[2] - 1)


def test_eps_derivatives_fd():
    a = e(5, 0)
    b = exp_map(e(5, 1), 0.3 * e(5, 2))
    li, lj = 20.0, 30.0
    E = tangent_frame(b)
    d = interaction_eps_derivatives(bp(a, li), bp(b, lj), E)
    h = 1e-6
    f = lambda bb, l: interaction_eps(bp(a, li), bp(bb, l))
    assert d.lam_j == pytest.approx((f(b, lj * math.exp(h)) - f(b, lj * math.exp(-h))) / (2 * h), rel=1e-7)
    fd = np.array([(f(exp_map(b, h * E[k]), lj) - f(exp_map(b, -h * E[k]), lj)) / (2 * h) for k in range(5)])
    assert np.allclose(d.center_j, fd / lj, rtol=1e-6, atol=1e-14)


def test_configuration_validation():
    n = 5
    with pytest.raises(ConfigurationError):
        Configuration(n, 0.0, [1.0, 1.0], [e(n, 0), e(n, 0)], [10, 10])
    with pytest.raises(ConfigurationError):
        Configuration(n, 0.0, [-1.0], [e(n, 0)], [10])
    with pytest.raises(ConfigurationError):
        Configuration(n, 0.0, [1.0], [e(n, 0)], [0.5])
    with pytest.raises(ConfigurationError):
        Configuration(n, -1e-3, [1.0], [e(n, 0)], [10])
    with pytest.raises(ConfigurationError):
        Configuration(n, 0.0, [1.0], [np.ones(4)], [10])
    with pytest.raises(ConfigurationError):
        BubbleParams(SpherePoint(e(n, 0)), 0.9)


def test_configuration_moved_and_json():
    n = 5
    c = Configuration(n, 1e-3, [1.0, 2.0], [e(n, 0), -e(n, 0)], [10.0, 20.0])
    m = c.moved(np.array([0.5, -0.5]), np.array([math.log(2), 0.0]), np.zeros((2, n)))
    assert np.allclose(m.alpha, [1.5, 1.5])
    assert np.allclose(m.lams, [20.0, 20.0])
    c2 = Configuration.from_json(c.to_json())
    assert np.allclose(c2.centers, c.centers) and c2.tau == c.tau
    assert c.p == pytest.approx(7 / 3 - 1e-3)
    assert c.theta == pytest.approx(1.5e-3)
    E = c.eps_matrix()
    assert E[0, 1] == E[1, 0] > 0 and E[0, 0] == 0


def test_alpha_K_tau():
    n = 5
    c = Configuration(n, 0.0, [1.0, 2.0], [e(n, 0), -e(n, 0)], [10.0, 20.0])
    assert alpha_K_tau(c, [1.0, 1.0]) == pytest.approx(1 + 2 ** (10 / 3))
