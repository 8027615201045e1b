import numpy as np
import pytest

from bubblered.bubbles import Configuration
from bubblered.expansions import ladder_K, table_for
from bubblered.functional import eval_reduced_hessian
from bubblered.geometry import SpherePoint, critical_point_at
from bubblered.solver import (LeftNeighborhoodError, NoConvergenceError, PositiveLaplacianError,
                              SolverOptions, TargetSpec, TauTooLargeError, balance_lambda,
                              initial_guess, lower_bound_diagnostic, newton_solve, normalize,
                              rescale_derivatives, slice_basis, solve, sweep_tau)

from conftest import e

N = 5


def cp(K, k, sign=1.0):
    return critical_point_at(K, SpherePoint(e(N, k, sign)))


@pytest.fixture(scope="module")
def single_max(K5):
    return solve(TargetSpec([cp(K5, 0)], 1e-4), K5)


def test_single_max_converges(single_max, K5):
    r = single_max
    assert r.residual_norm < 1e-10
    assert r.newton_iterations <= 6
    assert r.morse_index == 0 == r.certificate.formula
    assert r.derivatives.value.k_tau == pytest.approx(1.0, rel=1e-12)
    t = table_for(N)
    want = (t.ctilde2_eff / t.ctilde1_eff) * 3.0 / 1.6
    assert r.summary()["lambda2_tau"][0] == pytest.approx(want, rel=0.05)


def test_result_json(single_max):
    d = single_max.to_json()
    assert d["morse_index"] == d["formula_index"] == 0
    assert len(d["targets"]) == 1 and "certificate" in d


def test_energy_normalization(K5):
    r = solve(TargetSpec([cp(K5, 0)], 1e-4, normalization="energy"), K5, morse=False)
    assert r.derivatives.value.r == pytest.approx(1.0, rel=1e-12)


def test_target_validation(K5):
    with pytest.raises(PositiveLaplacianError):
        TargetSpec([cp(K5, 1)], 1e-4)           # Delta K = 3 > 0
    with pytest.raises(ValueError):
        TargetSpec([cp(K5, 0), cp(K5, 0)], 1e-4)
    with pytest.raises(ValueError):
        TargetSpec([cp(K5, 0)], 0.0)
    with pytest.raises(ValueError):
        TargetSpec([], 1e-4)
    with pytest.raises(ValueError):
        TargetSpec([cp(K5, 0)], 1e-4, normalization="other")


def test_formula_index(K5):
    ts = TargetSpec([cp(K5, 0), cp(K5, 5), cp(K5, 4)], 1e-4)
    assert ts.formula_index() == 2 + 0 + 1 + 2


def test_tau_too_large(K5):
    with pytest.raises(TauTooLargeError):
        initial_guess(TargetSpec([cp(K5, 0)], 0.5), K5)


def test_balance_lambda(K5):
    t = table_for(N)
    lam = balance_lambda(cp(K5, 0), 1e-4, t)
    assert lam ** 2 * 1e-4 == pytest.approx((t.ctilde2_eff / t.ctilde1_eff) * 3 / 1.6)


def test_no_convergence(K5):
    with pytest.raises(NoConvergenceError) as ei:
        solve(TargetSpec([cp(K5, 0)], 1e-4), K5, opts=SolverOptions(max_iter=1, tol=1e-14))
    assert len(ei.value.trace) >= 1


def test_left_neighborhood(K5):
    ts = TargetSpec([cp(K5, 0)], 1e-4)
    g = initial_guess(ts, K5)
    far = g.copy(lams=g.lams * 3.0)
    with pytest.raises(LeftNeighborhoodError):
        newton_solve(far, K5, opts=SolverOptions(max_lam_factor=1.5), targets=ts)


def test_rescale_matches_reevaluation(K5):
    cfg = Configuration(N, 1e-3, [1.0, 0.8], [e(N, 0), -e(N, 0)], [40.0, 50.0])
    rd = eval_reduced_hessian(cfg, K5, estimate_error=False)
    c = 1.7
    a = rescale_derivatives(rd, cfg, c)
    b = eval_reduced_hessian(cfg.copy(alpha=c * cfg.alpha), K5, estimate_error=False)
    for x, y in ((a.grad, b.grad), (a.param_grad, b.param_grad)):
        assert np.allclose(x, y, rtol=1e-10, atol=1e-12 * np.linalg.norm(y))
    assert np.allclose(a.hess_reduced, b.hess_reduced, rtol=1e-8, atol=1e-10 * np.max(np.abs(b.hess_reduced)))
    assert a.value.k_tau == pytest.approx(b.value.k_tau, rel=1e-12)
    n = normalize(cfg, rd)
    assert eval_reduced_hessian(n, K5, estimate_error=False).value.k_tau == pytest.approx(1.0, rel=1e-12)


def test_slice_basis_orthogonal():
    cfg = Configuration(N, 1e-3, [1.0, 0.8], [e(N, 0), -e(N, 0)], [40.0, 50.0])
    Q = slice_basis(cfg)
    w = np.zeros(Q.shape[0])
    w[:2] = cfg.alpha * cfg.lams
    assert np.allclose(Q.T @ Q, np.eye(Q.shape[1]))
    assert np.allclose(Q.T @ w, 0)


def test_sweep_requires_decreasing(K5):
    with pytest.raises(ValueError):
        sweep_tau(TargetSpec([cp(K5, 0)], 1e-4), [1e-4, 1e-3], K5)


def test_sweep_single(K5):
    res = sweep_tau(TargetSpec([cp(K5, 0)], 1e-3), [1e-3, 3e-4, 1e-4], K5, morse=False)
    lst = [r.summary()["lambda2_tau"][0] for r in res]
    t = table_for(N)
    want = (t.ctilde2_eff / t.ctilde1_eff) * 3.0 / 1.6
    dev = [abs(x / want - 1) for x in lst]
    assert dev[2] < dev[0]


def test_bound_diagnostic(single_max, K5):
    rep = lower_bound_diagnostic(single_max.config, K5, single_max.targets)
    d = rep.to_json()
    assert rep.measured < 1e-8
    assert rep.upper > 0 and d["measured_over_upper"] < 1e-4
