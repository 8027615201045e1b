"""Acceptance criteria 1-10 at their stated tolerances.

Each test records one pass/fail line (printed at the end of the pytest run).
Criterion 2 cannot be met by the closed-form coefficient; it runs unchanged
and is marked as an expected failure.
"""
import itertools
import math
import time

import numpy as np
import pytest

from bubblered.bubbles import Configuration
from bubblered.constants import build_table, dual_provenance_residuals, verify_identities
from bubblered.expansions import (LADDER_CASES, hessian_block_report, interaction_ratio_ladder,
                                  ladder_K, run_ladder, table_for)
from bubblered.functional import eval_reduced_gradient, eval_reduced_hessian, fd_param_gradient
from bubblered.geometry import KField, SpherePoint, critical_point_at, exp_map, tangent_frame
from bubblered.quadrature import QuadratureSpec
from bubblered.solver import TargetSpec, balance_lambda, initial_guess, newton_solve, solve, sweep_tau

from conftest import record

N = 5
E = np.eye(N + 1)


def cps(K, points):
    return [critical_point_at(K, SpherePoint(p)) for p in points]


# ---------------------------------------------------------------------------


def test_criterion_01_constants():
    t0 = time.perf_counter()
    worst_prov = worst_id = 0.0
    for n in (5, 6, 7, 8):
        t = build_table(n)
        worst_prov = max(worst_prov, max(dual_provenance_residuals(t).values()))
        for c in verify_identities(t):
            if c.required:
                worst_id = max(worst_id, c.residual)
    dt = time.perf_counter() - t0
    ok = worst_prov <= 1e-10 and worst_id <= 1e-10 and dt < 5.0
    record(1, ok, f"closed vs quadrature max rel {worst_prov:.1e}, identities max rel {worst_id:.1e}, {dt:.2f} s")
    assert ok


def _balance_single_K(n):
    # K = 1 + b x_0^2 puts lam = tau^{-1/2} exactly on the balance law at e_0
    t = table_for(n)
    g = t.ctilde1_eff / t.ctilde2_eff          # required -Delta K / K
    b = g / (2 * n - g)
    return KField.quadratic(1.0, [b] + [0.0] * n)


@pytest.mark.xfail(strict=True, reason="closed-form lambda-lambda coefficient disagrees with quadrature")
def test_criterion_02_lambda_lambda_entry():
    n, tau = 5, 1e-4
    lam = tau ** -0.5
    K = _balance_single_K(n)
    cp = critical_point_at(K, SpherePoint(E[0]))
    assert balance_lambda(cp, tau, table_for(n)) == pytest.approx(lam, rel=1e-12)
    cfg = Configuration(n, tau, [1.0], [E[0]], [lam])
    rd = eval_reduced_hessian(cfg, K)
    beta = 2.0 / (cfg.p + 1.0)
    measured = rd.hess_reduced[1, 1] * rd.value.k_tau ** beta / (8 * n * (n - 1)) / tau
    t = table_for(n)
    predicted = t.hess_lambda_coeff
    rel = abs(measured - predicted) / abs(predicted)
    rel_derived = abs(measured - t.hess_lambda_eff) / t.hess_lambda_eff
    ok = rel <= 0.05
    record(2, ok, f"measured {measured:.4f} tau vs closed form {predicted:.4e} tau (rel {rel:.2e}); "
                  f"re-derived {t.hess_lambda_eff:.4f} tau agrees to {rel_derived:.1e} [expected failure]")
    assert ok


def test_criterion_03_interaction_law():
    r = interaction_ratio_ladder(N, (25, 50, 100, 200))
    dev = [abs(x - 1) for x in r]
    ok = 0.9 <= r[-1] <= 1.1 and all(a > b for a, b in zip(dev, dev[1:]))
    record(3, ok, "ratios " + ", ".join(f"{x:.6f}" for x in r))
    assert ok


def test_criterion_04_remainder_orders():
    parts, ok = [], True
    for case in ("k-integral", "energy", "grad-lambda", "grad-center"):
        rep = run_ladder(case)
        ok = ok and rep.passed
        parts.append(f"{case} {rep.fitted_slope:.2f} (retained {rep.retained_decay:.0f})")
    record(4, ok, "; ".join(parts))
    assert ok


def _random_configuration(rng, q):
    while True:
        C = rng.standard_normal((q, N + 1))
        try:
            return Configuration(N, float(rng.uniform(1e-4, 1e-2)), rng.uniform(0.8, 1.2, q), C,
                                 rng.uniform(20.0, 200.0, q), d_min=0.5)
        except ValueError:
            continue


@pytest.mark.slow
def test_criterion_05_gradient_oracle():
    rng = np.random.default_rng(20240517)
    K = ladder_K(N)
    worst = 0.0
    ok = True
    qs = (1, 2, 3, 1, 2)
    for q in qs:
        cfg = _random_configuration(rng, q)
        g = eval_reduced_gradient(cfg, K, estimate_error=False).param_grad
        f = fd_param_gradient(cfg, K)
        norm = np.linalg.norm(g)
        big = np.abs(g) > 1e-10 * norm
        rel = np.abs(f - g)[big] / np.abs(g)[big]
        worst = max(worst, float(np.max(rel)))
        ok = ok and bool(np.all(rel <= 1e-6)) and bool(np.all(np.abs(f - g)[~big] <= 1e-6 * norm))
    record(5, ok, f"5 configurations (q = {qs}), {sum(q * (N + 2) for q in qs)} directions, "
                  f"max relative error {worst:.1e}")
    assert ok


def _balanced(K, points, lam_min):
    c = cps(K, points)
    t = table_for(N)
    tau = (min(balance_lambda(p, 1.0, t) for p in c) / lam_min) ** 2
    return initial_guess(TargetSpec(c, tau), K)


def test_criterion_06_hessian_blocks():
    K = ladder_K(N)
    ok, parts = True, []
    cs = []
    for lam in (25, 50, 100, 200):
        rep = hessian_block_report(_balanced(K, [E[0], -E[0]], lam), K)
        neg = np.sort(rep.alpha_eig_scaled)[:-1]
        cs.append(float(-np.max(neg)))
        if lam >= 100:
            ok = ok and rep.passed
            parts.append(f"q=2 lam {lam}: off/diag {rep.off_block_ratio:.1e}")
    for lam in (100, 200):
        rep = hessian_block_report(_balanced(K, [E[0], -E[0], E[5]], lam), K)
        ok = ok and rep.passed
        neg = np.sort(rep.alpha_eig_scaled)[:-1]
        parts.append(f"q=3 lam {lam}: off/diag {rep.off_block_ratio:.1e}, c {-np.max(neg):.1f}")
    # c bounded away from zero along the ladder
    ok = ok and min(cs) > 0 and max(cs) / min(cs) < 1.5
    parts.append("q=2 c along ladder " + ", ".join(f"{c:.1f}" for c in cs))
    record(6, ok, "; ".join(parts))
    assert ok


def unequal_maxima_K():
    mons = {}
    for k, b in enumerate((0.6, 0.1, 0.2, 0.3, 0.4, 0.5)):
        e = [0] * (N + 1)
        e[k] = 2
        mons[tuple(e)] = b
    mons[(1, 0, 0, 0, 0, 0)] = 0.1
    return KField.polynomial(N, 1.0, mons)


@pytest.mark.slow
def test_criterion_07_balance_laws():
    K = unequal_maxima_K()
    targets = cps(K, [E[0], -E[0]])
    t = table_for(N)
    taus = [1e-3, 3e-4, 1e-4, 3e-5, 1e-5]
    res = sweep_tau(TargetSpec(targets, taus[0]), taus, K, morse=False)
    want = np.array([-(t.ctilde2_eff / t.ctilde1_eff) * c.laplacian / c.value for c in targets])
    devs, spreads = [], []
    for r in res:
        s = r.summary()
        devs.append(np.max(np.abs(np.array(s["lambda2_tau"]) / want - 1)))
        ak = np.array(s["alpha_K_power"])
        spreads.append(float((ak.max() - ak.min()) / ak.mean()))
    ok = devs[-1] <= 0.05 and spreads[-1] <= 0.01 and all(a > b for a, b in zip(spreads, spreads[1:]))
    record(7, ok, f"lam^2 tau rel. deviation {devs[0]:.3f} -> {devs[-1]:.3f}; "
                  f"alpha K^(3/4) spread {spreads[0]:.1e} -> {spreads[-1]:.1e}")
    assert ok


MORSE_CASES = [
    ("max", [E[0]]),
    ("saddle m=4", [E[5]]),
    ("saddle m=3", [E[4]]),
    ("two maxima", [E[0], -E[0]]),
    ("max + saddle", [E[0], E[5]]),
    ("two maxima + saddle", [E[0], -E[0], E[5]]),
]


@pytest.mark.slow
def test_criterion_08_morse_index():
    K = ladder_K(N)
    ok, parts = True, []
    for name, pts in MORSE_CASES:
        # at tau=1e-4 the q=3 pair at distance pi/2 interacts too strongly to converge
        ts = TargetSpec(cps(K, pts), 1e-5)
        r = solve(ts, K)
        good = r.morse_index == ts.formula_index()
        ok = ok and good
        parts.append(f"{name} {r.morse_index}/{ts.formula_index()}")
    record(8, ok, f"{len(MORSE_CASES)} cases at tau=1e-5, computed/formula: " + ", ".join(parts))
    assert ok


def _param_vector(cfg):
    return np.concatenate([cfg.alpha, np.log(cfg.lams), cfg.centers.ravel()])


@pytest.mark.slow
def test_criterion_09_uniqueness():
    K = ladder_K(N)
    ts = TargetSpec(cps(K, [E[0], -E[0]]), 1e-4)
    base = initial_guess(ts, K)
    rng = np.random.default_rng(99)
    sols = []
    for _ in range(10):
        q = base.q
        v = np.array([exp_map(base.centers[j], rng.uniform(-1, 1, N) @ tangent_frame(base.centers[j])
                              * 1.0 / base.lams[j]) for j in range(q)])
        start = base.copy(alpha=base.alpha * np.exp(rng.uniform(-0.05, 0.05, q)),
                          lams=base.lams * np.exp(rng.uniform(-0.1, 0.1, q)), centers=v)
        sols.append(_param_vector(newton_solve(start, K, targets=ts, morse=False).config))
    dist = max(np.linalg.norm(a - b) for a, b in itertools.combinations(sols, 2))
    ok = dist <= 1e-6
    record(9, ok, f"10 perturbed starts, max pairwise parameter distance {dist:.1e}")
    assert ok


def test_criterion_10_exact_solution():
    spec = QuadratureSpec()
    cfg = Configuration(N, 0.0, [1.0], [E[0]], [100.0])
    rd = eval_reduced_gradient(cfg, KField.constant(N), spec)
    g = float(np.linalg.norm(rd.grad))
    ok = g <= 10 * spec.tol
    record(10, ok, f"|reduced gradient| {g:.1e} (bound {10 * spec.tol:.0e})")
    assert ok
