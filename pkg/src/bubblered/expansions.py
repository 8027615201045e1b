"""Closed-form asymptotic predictions for bubble-sum integrals and derivatives.

All formulas take constants from a ``ConstantsTable``.  Each prediction has
a quadrature counterpart in ``functional``; ``run_ladder`` compares the two
along a ladder of concentration parameters and fits the remainder decay.

Curvature data at a center are taken in the tangent frame used for the
center parameters of that bubble (``cfg.frames``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .bubbles import Configuration, interaction_eps_derivatives
from .constants import ConstantsTable, build_table
from .geometry import KField, KSuite, chordal_sq, k_eval_suite


@lru_cache(maxsize=16)
def table_for(n: int) -> ConstantsTable:
    return build_table(n)


def _lam_theta(cfg: Configuration) -> np.ndarray:
    # lam^theta via exp(theta ln lam) for precision at tiny tau
    return np.exp(cfg.theta * np.log(cfg.lams))


def _suites(cfg: Configuration, K: KField) -> list[KSuite]:
    return [k_eval_suite(K, cfg.centers[i], cfg.frames[i]) for i in range(cfg.q)]


def alpha_K(cfg: Configuration, K: KField) -> float:
    """alpha_{K,tau}^{p+1} = sum_i K_i alpha_i^{p+1} / lam_i^theta."""
    Kv = np.array([s.K for s in _suites(cfg, K)])
    return float(np.sum(Kv * cfg.alpha ** (cfg.p + 1) / _lam_theta(cfg)))


def _prefactor(cfg: Configuration, K: KField) -> float:
    n = cfg.n
    return alpha_K(cfg, K) ** (-(n - 2) / n)


def expand_k_integral(cfg: Configuration, K: KField, table: ConstantsTable | None = None,
                      literal: bool = False) -> float:
    t = table or table_for(cfg.n)
    n, tau = cfg.n, cfg.tau
    crit = 2 * n / (n - 2)
    c1 = t.cbar1 if literal else t.cbar1_eff
    lt = _lam_theta(cfg)
    S = _suites(cfg, K)
    terms = []
    for i in range(cfg.q):
        a = cfg.alpha[i]
        terms += [t.cbar0 * S[i].K * a ** (cfg.p + 1) / lt[i],
                  c1 * S[i].K * a ** crit * tau / lt[i],
                  t.cbar2 * S[i].laplacian * a ** crit / (lt[i] * cfg.lams[i] ** 2)]
    eps = cfg.eps_matrix()
    pstar = (n + 2) / (n - 2)
    for i in range(cfg.q):
        for j in range(cfg.q):
            if i != j:
                terms.append(t.bbar1 * cfg.alpha[i] ** pstar * cfg.alpha[j] * S[i].K * eps[i, j] / lt[i])
    return math.fsum(terms)


def expand_r(cfg: Configuration, table: ConstantsTable | None = None) -> float:
    t = table or table_for(cfg.n)
    n = cfg.n
    eps = cfg.eps_matrix()
    cross = float(cfg.alpha @ eps @ cfg.alpha)
    return 4 * n * (n - 1) * t.cbar0 * float(cfg.alpha @ cfg.alpha) + t.btilde1 * cross


def expand_energy(cfg: Configuration, K: KField, table: ConstantsTable | None = None,
                  literal: bool = False) -> float:
    """J_tau on a bubble sum.

    The default bracket carries the factor 2/(p+1) / cbar0 that comes from
    expanding k^{-2/(p+1)}; ``literal=True`` drops it and uses cbar1 as printed.
    """
    t = table or table_for(cfg.n)
    n, tau, p = cfg.n, cfg.tau, cfg.p
    beta = 2.0 / (p + 1.0)
    crit = 2 * n / (n - 2)
    pstar = (n + 2) / (n - 2)
    aK = alpha_K(cfg, K)
    lt = _lam_theta(cfg)
    S = _suites(cfg, K)
    eps = cfg.eps_matrix()
    c1 = t.cbar1 if literal else t.cbar1_eff
    norm = 1.0 if literal else beta / t.cbar0
    corr = []
    for i in range(cfg.q):
        w = S[i].K * cfg.alpha[i] ** crit / (lt[i] * aK)
        corr.append(w * (c1 * tau + t.cbar2 * S[i].laplacian / (S[i].K * cfg.lams[i] ** 2)))
        for j in range(cfg.q):
            if i != j:
                corr.append(t.bbar1 * cfg.alpha[i] ** pstar * cfg.alpha[j] * S[i].K * eps[i, j]
                            / (lt[i] * aK))
    return expand_r(cfg, t) / (t.cbar0 * aK) ** beta * (1.0 - norm * math.fsum(corr))


def expand_grad_alpha(cfg: Configuration, K: KField, table: ConstantsTable | None = None) -> np.ndarray:
    """Predicted dJ[phi_{1,j}]."""
    t = table or table_for(cfg.n)
    q = cfg.q
    al = cfg.alpha
    a2 = float(al @ al)
    aK = alpha_K(cfg, K)
    lt = _lam_theta(cfg)
    S = _suites(cfg, K)
    eps = cfg.eps_matrix()
    dk = np.array([S[k].laplacian / (S[k].K * cfg.lams[k] ** 2) for k in range(q)])
    mean_dk = float(np.sum(dk * al ** 2) / a2)
    mean_eps = float(al @ eps @ al) / a2
    out = np.empty(q)
    for j in range(q):
        bal = 1.0 - a2 / aK * S[j].K / lt[j] * al[j] ** (cfg.p - 1)
        inter = mean_eps - sum(al[i] / al[j] * eps[i, j] for i in range(q) if i != j)
        out[j] = al[j] * _prefactor(cfg, K) * (
            t.grave_c0 * bal - t.grave_c2 * (dk[j] - mean_dk) + t.grave_b1 * inter)
    return out


def expand_grad_lambda(cfg: Configuration, K: KField, table: ConstantsTable | None = None) -> np.ndarray:
    """Predicted dJ[phi_{2,j}] with phi_2 = -lam d_lam phi."""
    t = table or table_for(cfg.n)
    q = cfg.q
    S = _suites(cfg, K)
    out = np.empty(q)
    for j in range(q):
        inter = 0.0
        for i in range(q):
            if i != j:
                d = interaction_eps_derivatives(cfg.bubble(i), cfg.bubble(j), cfg.frames[j])
                inter += cfg.alpha[i] / cfg.alpha[j] * d.lam_j
        br = (t.ctilde1_eff * cfg.tau + t.ctilde2_eff * S[j].laplacian / (S[j].K * cfg.lams[j] ** 2)
              - t.btilde2_eff * inter)
        out[j] = -cfg.alpha[j] * _prefactor(cfg, K) * br
    return out


def expand_grad_center(cfg: Configuration, K: KField, table: ConstantsTable | None = None) -> np.ndarray:
    """Predicted dJ[phi_{3,j}] (q x n, frame components)."""
    t = table or table_for(cfg.n)
    q, n = cfg.q, cfg.n
    S = _suites(cfg, K)
    out = np.empty((q, n))
    for j in range(q):
        inter = np.zeros(n)
        for i in range(q):
            if i != j:
                d = interaction_eps_derivatives(cfg.bubble(i), cfg.bubble(j), cfg.frames[j])
                inter += cfg.alpha[i] / cfg.alpha[j] * d.center_j
        lam = cfg.lams[j]
        br = (t.ccheck3_eff * S[j].grad / (S[j].K * lam)
              + t.ccheck4_eff * S[j].grad_laplacian / (S[j].K * lam ** 3)
              + t.bcheck3_eff * inter)
        out[j] = -cfg.alpha[j] * _prefactor(cfg, K) * br
    return out


def center_balance(K: KField, x: np.ndarray, lam: float, n: int,
                   table: ConstantsTable | None = None) -> np.ndarray:
    """Offset (frame components) that zeroes the two curvature terms of the center gradient."""
    t = table or table_for(n)
    S = k_eval_suite(K, x)
    return -(t.ccheck4_eff / t.ccheck3_eff) * np.linalg.solve(S.hess, S.grad_laplacian) / lam ** 2


def expand_r_over_k(cfg: Configuration, K: KField, table: ConstantsTable | None = None) -> float:
    """r/k_tau at a balanced configuration."""
    t = table or table_for(cfg.n)
    n = cfg.n
    a2 = float(cfg.alpha @ cfg.alpha)
    slope = t.cbar1_eff / t.cbar0 - (t.ctilde1_eff / t.ctilde2_eff) * (t.cbar2 / t.cbar0)
    return 4 * n * (n - 1) * a2 / alpha_K(cfg, K) * (1.0 - slope * cfg.tau)


def r_over_k_tau_slope(n: int, table: ConstantsTable | None = None) -> float:
    t = table or table_for(n)
    return -4 * n * (n - 1) * (t.cbar1_eff / t.cbar0
                               - (t.ctilde1_eff / t.ctilde2_eff) * (t.cbar2 / t.cbar0))


def expand_hessian_blocks(cfg: Configuration, K: KField, table: ConstantsTable | None = None,
                          k_tau: float | None = None) -> np.ndarray:
    """Leading block-diagonal form of the reduced Hessian in the scaled basis.

    ``k_tau`` defaults to the leading-order value cbar0 alpha_{K,tau}^{p+1}.
    """
    t = table or table_for(cfg.n)
    q, n = cfg.q, cfg.n
    M = q * (n + 2)
    al = cfg.alpha
    a2 = float(al @ al)
    beta = 2.0 / (cfg.p + 1.0)
    aK = alpha_K(cfg, K)
    if k_tau is None:
        k_tau = t.cbar0 * aK
    H = np.zeros((M, M))
    lam = cfg.lams
    pre = t.hess_alpha_eff / (aK ** ((n - 2) / n))
    for k in range(q):
        for l in range(q):
            H[k, l] = pre * (-(k == l) + al[k] * al[l] / a2) / (lam[k] * lam[l])
    scale = 8 * n * (n - 1) / k_tau ** beta
    S = _suites(cfg, K)
    for i in range(q):
        H[q + i, q + i] = scale * t.hess_lambda_eff * cfg.tau
        blk = -scale * t.hess_center_eff * S[i].hess / (S[i].K * lam[i] ** 2)
        s = 2 * q + i * n
        H[s:s + n, s:s + n] = blk
    return H


def block_masks(q: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks of the in-block entries and of the off-block entries.

    Blocks are the three parameter types (alpha, lam, center), each spanning
    all bubbles.
    """
    M = q * (n + 2)
    lab = np.empty(M, dtype=int)
    lab[:q] = 0
    lab[q:2 * q] = 1
    lab[2 * q:] = 2
    inb = lab[:, None] == lab[None, :]
    return inb, ~inb


def cross_bubble_mask(q: int, n: int) -> np.ndarray:
    """In-block entries coupling two different bubbles (lam and center blocks)."""
    owner = np.concatenate([np.arange(q), np.arange(q), np.repeat(np.arange(q), n)])
    inb, _ = block_masks(q, n)
    mask = inb & (owner[:, None] != owner[None, :])
    mask[:q, :q] = False
    return mask


# ---------------------------------------------------------------------------
# ladders


@dataclass
class LadderRow:
    lam: float
    tau: float
    predicted: float
    measured: float
    est_error: float

    def __post_init__(self) -> None:
        for k in ("lam", "tau", "predicted", "measured", "est_error"):
            setattr(self, k, float(getattr(self, k)))

    @property
    def remainder(self) -> float:
        return self.measured - self.predicted


@dataclass
class ExpansionReport:
    """Prediction against quadrature along a ladder of concentrations."""
    case: str
    rows: list[LadderRow]
    claimed_order: str
    retained_decay: float
    fitted_slope: float
    extras: dict = field(default_factory=dict)

    @property
    def predicted(self) -> np.ndarray:
        return np.array([r.predicted for r in self.rows])

    @property
    def measured(self) -> np.ndarray:
        return np.array([r.measured for r in self.rows])

    @property
    def remainder(self) -> np.ndarray:
        return np.array([r.remainder for r in self.rows])

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.fitted_slope)
                    and self.fitted_slope <= self.retained_decay - 0.4)

    def csv_rows(self) -> list[list[float]]:
        return [[r.lam, r.predicted, r.measured, r.remainder, r.est_error] for r in self.rows]

    def to_json(self) -> dict:
        return {"case": self.case, "claimed_order": self.claimed_order,
                "retained_decay": self.retained_decay, "fitted_slope": self.fitted_slope,
                "passed": self.passed,
                "rows": [{"lambda": r.lam, "tau": r.tau, "predicted": r.predicted,
                          "measured": r.measured, "remainder": r.remainder,
                          "est_error": r.est_error} for r in self.rows],
                **self.extras}


def fit_slope(lams: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log|values| against log lam."""
    x = np.log(np.asarray(lams, dtype=float))
    with np.errstate(divide="ignore"):
        y = np.log(np.abs(np.asarray(values, dtype=float)))
    if len(x) < 2 or not np.all(np.isfinite(y)):
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


def ladder_K(n: int) -> KField:
    """Quadratic test curvature with a nondegenerate maximum at e_0."""
    return KField.quadratic(1.0, [0.6] + [0.1 * k for k in range(1, n + 1)])


def ladder_K_gradlap(n: int) -> KField:
    """Curvature with grad K = 0 but grad Lap K != 0 at e_0."""
    mons = {}
    for k in range(n + 1):
        e = [0] * (n + 1)
        e[k] = 2
        mons[tuple(e)] = [0.6, 0.1, 0.2, 0.3, 0.4, 0.5][k] if k < 6 else 0.1 * k
    e = [0] * (n + 1); e[1] = 3
    mons[tuple(e)] = 0.3
    e = [0] * (n + 1); e[2] = 1; e[3] = 2
    mons[tuple(e)] = 0.2
    return KField.polynomial(n, 1.0, mons)


def tau_for(rule: str, lam: float, K: KField, x: np.ndarray, n: int) -> float:
    if rule in ("lambda^-2", "lam^-2"):
        return lam ** -2.0
    if rule == "zero":
        return 0.0
    if rule == "balance":
        t = table_for(n)
        s = k_eval_suite(K, x)
        return -(t.ctilde2_eff / t.ctilde1_eff) * s.laplacian / (s.K * lam * lam)
    raise ValueError(f"unknown tau rule {rule!r}")


def _e(n: int, k: int) -> np.ndarray:
    return np.eye(n + 1)[k]


def _single(n: int, lam: float, K: KField, tau_rule: str) -> Configuration:
    x = _e(n, 0)
    return Configuration(n, tau_for(tau_rule, lam, K, x, n), [1.0], [x], [lam])


def _pair(n: int, lam: float, K: KField, tau_rule: str) -> Configuration:
    from .geometry import exp_map
    a0 = _e(n, 0)
    a1 = exp_map(a0, _e(n, 1))
    return Configuration(n, tau_for(tau_rule, lam, K, a0, n), [1.0, 1.0], [a0, a1], [lam, 0.7 * lam])


def _measure_k(cfg, K, spec):
    from .functional import moments
    fine = float(moments(cfg, K, spec, 0)["k"][0])
    coarse = float(moments(cfg, K, spec.coarsened(), 0)["k"][0])
    return fine, abs(fine - coarse)


def _measure_J(cfg, K, spec):
    from .functional import eval_functional
    fv = eval_functional(cfg, K, spec)
    return fv.J, fv.error


def _measure_r_over_k(cfg, K, spec):
    from .functional import eval_functional
    a = eval_functional(cfg, K, spec, estimate_error=False)
    b = eval_functional(cfg, K, spec.coarsened(), estimate_error=False)
    return a.r / a.k_tau, abs(a.r / a.k_tau - b.r / b.k_tau)


def _grad_component(sel: Callable[[Configuration, np.ndarray], float]):
    def measure(cfg, K, spec):
        from .functional import eval_reduced_gradient
        rd = eval_reduced_gradient(cfg, K, spec)
        return sel(cfg, rd.grad), rd.grad_error
    return measure


@dataclass(frozen=True)
class LadderCase:
    name: str
    K: Callable[[int], KField]
    build: Callable[[int, float, KField, str], Configuration]
    predict: Callable[[Configuration, KField], float]
    measure: Callable
    claimed_order: str
    retained_decay: float
    tau_rule: str = "lambda^-2"


def _center_norm(cfg: Configuration, g: np.ndarray) -> float:
    return float(np.linalg.norm(g[2 * cfg.q:2 * cfg.q + cfg.n]))


LADDER_CASES: dict[str, LadderCase] = {
    "k-integral": LadderCase(
        "k-integral", ladder_K, _single, lambda c, K: expand_k_integral(c, K), _measure_k,
        "tau^2 + lam^-4 + eps^((n+2)/n)", -2.0),
    "energy": LadderCase(
        "energy", ladder_K, _single, lambda c, K: expand_energy(c, K), _measure_J,
        "tau^2 + |grad K|^2/lam^2 + lam^-4 + eps^((n+2)/n)", -2.0),
    "grad-lambda": LadderCase(
        "grad-lambda", ladder_K, _single, lambda c, K: float(expand_grad_lambda(c, K)[0]),
        _grad_component(lambda c, g: float(g[c.q])),
        "tau^2 + lam^-4 + eps^((n+2)/n)", -2.0),
    "grad-center": LadderCase(
        "grad-center", ladder_K_gradlap, _single,
        lambda c, K: float(np.linalg.norm(expand_grad_center(c, K)[0])),
        _grad_component(_center_norm),
        "tau/lam + lam^-5 + eps^((n+1)/n)", -3.0),
    "r-over-k": LadderCase(
        "r-over-k", ladder_K, _single, lambda c, K: expand_r_over_k(c, K), _measure_r_over_k,
        "tau^2 + lam^-4", -2.0, tau_rule="balance"),
}


def run_ladder(case: str, n: int = 5, lams: Sequence[float] = (25, 50, 100, 200),
               tau_rule: str | None = None, spec=None) -> ExpansionReport:
    """Evaluate a registered expansion along ``lams`` and fit the remainder decay."""
    from .quadrature import QuadratureSpec
    if case not in LADDER_CASES:
        raise KeyError(case)
    if len(lams) < 4:
        raise ValueError("a ladder needs at least 4 lambda values")
    c = LADDER_CASES[case]
    spec = spec or QuadratureSpec()
    rule = tau_rule or c.tau_rule
    K = c.K(n)
    rows = []
    for lam in lams:
        cfg = c.build(n, float(lam), K, rule)
        pred = c.predict(cfg, K)
        meas, err = c.measure(cfg, K, spec)
        rows.append(LadderRow(float(lam), cfg.tau, float(pred), float(meas), float(err)))
    slope = fit_slope([r.lam for r in rows], [r.remainder for r in rows])
    return ExpansionReport(case, rows, c.claimed_order, c.retained_decay, slope,
                           {"n": n, "tau_rule": rule})


def eps_derivative_report(n: int = 5, lams: Sequence[float] = (25, 50, 100, 200)) -> ExpansionReport:
    """lam_j d_lam_j eps_ij / eps_ij against its far-field limit (2-n)/2."""
    K = KField.constant(n)
    rows = []
    for lam in lams:
        cfg = _pair(n, float(lam), K, "zero")
        d = interaction_eps_derivatives(cfg.bubble(0), cfg.bubble(1), cfg.frames[1])
        rows.append(LadderRow(float(lam), 0.0, (2 - n) / 2, d.lam_j / d.eps, 0.0))
    slope = fit_slope(lams, [r.remainder for r in rows])
    return ExpansionReport("interaction-eps-derivative", rows, "lam^-2", 0.0, slope, {"n": n})


# ---------------------------------------------------------------------------
# interaction lemma


def _pair_integral(cfg: Configuration, f, spec):
    from .quadrature import integrate_with_error
    res = integrate_with_error(f, cfg, spec)
    return res.value, res.error


def interaction_lemma_suite(n: int = 5, lams: Sequence[float] = (25, 50, 100, 200),
                            tau_rule: str = "zero", spec=None) -> list[ExpansionReport]:
    """Quadrature checks of the two-bubble interaction integrals.

    Uses bubbles at geodesic distance 1 with lam_1 = 0.7 lam_0.  Ratio reports
    have predicted = 1 and measured = measured / prediction.
    """
    from .bubbles import bubble_eval, phi_fields
    from .quadrature import QuadratureSpec
    spec = spec or QuadratureSpec()
    t = table_for(n)
    K1 = KField.constant(n)
    pstar = (n + 2) / (n - 2)
    bm = 0.5 * (1.0 + n / (n - 2))      # mixed-power exponent, 1 <= bm < n/(n-2)
    names = ["ii-c1", "ii-c2", "ii-c3", "iii-b1", "iii-b2", "iii-b3", "iv-cross12", "iv-cross13",
             "v-mixed", "vi-log", "L-interaction"]
    rows: dict[str, list[LadderRow]] = {k: [] for k in names}
    for lam in lams:
        cfg = _pair(n, float(lam), K1, tau_rule)
        b0, b1 = cfg.bubble(0), cfg.bubble(1)
        F0, F1 = cfg.frames
        p, th = cfg.p, cfg.theta
        lt = float(lam) ** th
        eps = cfg.eps_matrix()[0, 1]
        d = interaction_eps_derivatives(b0, b1, F1)
        unit = d.center_j / np.linalg.norm(d.center_j)

        def self_terms(X):
            ph = bubble_eval(b0, X)
            w = ph ** (p - 1.0)
            f2 = phi_fields(b0, 2, X, F0)
            f3 = phi_fields(b0, 3, X, F0)
            return np.column_stack([w * ph * ph, w * f2 * f2, w * f3[:, 0] * f3[:, 0],
                                    w * ph * f2, w * ph * f3[:, 0]])

        v, e = _pair_integral(cfg, self_terms, spec)
        for k, (nm, c) in enumerate([("ii-c1", t.c1), ("ii-c2", t.c2), ("ii-c3", t.c3)]):
            rows[nm].append(LadderRow(lam, cfg.tau, 1.0, lt * v[k] / c, e / c))
        rows["iv-cross12"].append(LadderRow(lam, cfg.tau, 0.0, lt * v[3], e))
        rows["iv-cross13"].append(LadderRow(lam, cfg.tau, 0.0, lt * v[4], e))

        def cross_terms(X):
            ph0 = bubble_eval(b0, X)
            ph1 = bubble_eval(b1, X)
            w = ph0 ** p
            f3 = phi_fields(b1, 3, X, F1)
            return np.column_stack([w * ph1, w * phi_fields(b1, 2, X, F1), w * (f3 @ unit),
                                    ph0 ** (2 * n / (n - 2) - bm - cfg.tau) * ph1 ** bm,
                                    (ph0 * ph1) ** (n / (n - 2)),
                                    ph0 ** pstar * ph1])

        v, e = _pair_integral(cfg, cross_terms, spec)
        cn = float(np.linalg.norm(d.center_j))
        preds = [t.b1 * eps, t.b2 * (-d.lam_j), t.b3 * cn]
        for k, nm in enumerate(["iii-b1", "iii-b2", "iii-b3"]):
            rows[nm].append(LadderRow(lam, cfg.tau, 1.0, lt * v[k] / preds[k], e / abs(preds[k])))
        rows["v-mixed"].append(LadderRow(lam, cfg.tau, 0.0, lt * v[3] / eps ** bm, e / eps ** bm))
        rows["vi-log"].append(LadderRow(lam, cfg.tau, 0.0,
                                        v[4] / (eps ** (n / (n - 2)) * abs(math.log(eps))), 0.0))
        lint = 4 * n * (n - 1) * v[5]
        rows["L-interaction"].append(LadderRow(lam, cfg.tau, 1.0, lint / (t.btilde1 * eps),
                                               4 * n * (n - 1) * e / (t.btilde1 * eps)))
    orders = {"ii-c1": "tau + lam^-2", "ii-c2": "tau + lam^-2", "ii-c3": "tau + lam^-2",
              "iii-b1": "tau^2 + lam^-4 + eps^((n+2)/n)", "iii-b2": "tau^2 + lam^-4 + eps^((n+2)/n)",
              "iii-b3": "tau^2 + lam^-4 + eps^((n+2)/n)", "iv-cross12": "lam^-2",
              "iv-cross13": "lam^-2", "v-mixed": "eps^beta (bounded ratio)",
              "vi-log": "eps^(n/(n-2)) ln eps (bounded ratio)", "L-interaction": "eps^((n+2)/n)"}
    out = []
    for nm in names:
        rr = rows[nm]
        out.append(ExpansionReport(nm, rr, orders[nm], 0.0,
                                   fit_slope(lams, [r.remainder for r in rr]),
                                   {"n": n, "tau_rule": tau_rule}))
    return out


def interaction_ratio_ladder(n: int = 5, lams: Sequence[float] = (25, 50, 100, 200),
                             tau_rule: str = "lambda^-2", spec=None) -> list[float]:
    """lam_i^theta int phi_i^{(n+2)/(n-2)-tau} phi_j / (b_1 eps_ij) along the ladder."""
    from .bubbles import bubble_eval
    from .quadrature import QuadratureSpec
    spec = spec or QuadratureSpec()
    t = table_for(n)
    from .geometry import exp_map
    out = []
    for lam in lams:
        a0 = _e(n, 0)
        a1 = exp_map(a0, _e(n, 1))
        tau = tau_for(tau_rule, lam, KField.constant(n), a0, n)
        cfg = Configuration(n, tau, [1.0, 1.0], [a0, a1], [lam, lam])
        b0, b1 = cfg.bubble(0), cfg.bubble(1)
        p = cfg.p
        v, _ = _pair_integral(cfg, lambda X: bubble_eval(b0, X) ** p * bubble_eval(b1, X), spec)
        out.append(float(v * np.exp(cfg.theta * math.log(lam)) / (t.b1 * cfg.eps_matrix()[0, 1])))
    return out


# ---------------------------------------------------------------------------
# refined gradient density


def ball_radius(cfg: Configuration) -> float:
    """Half the minimal center separation (pi/2 for a single bubble)."""
    from .geometry import geodesic_distance
    d = [geodesic_distance(cfg.centers[i], cfg.centers[j])
         for i in range(cfg.q) for j in range(i + 1, cfg.q)]
    return 0.5 * min(d) if d else 0.5 * math.pi


def _test_field(cfg: Configuration, test_field, i: int):
    from .bubbles import phi_fields
    if callable(test_field):
        return test_field
    k, comp = (test_field, 0) if isinstance(test_field, int) else test_field
    b, F = cfg.bubble(i), cfg.frames[i]
    if k == 3:
        return lambda X: phi_fields(b, 3, X, F)[:, comp]
    return lambda X: phi_fields(b, k, X, F)


def refined_gradient_density(cfg: Configuration, K: KField, i: int, test_field,
                             spec=None, literal: bool = False) -> float:
    """Localized prediction of k_tau^{2/(p+1)} / (8n(n-1)) dJ(sum alpha phi)[nu], bubble i only.

    ``test_field`` is k in {1, 2, 3}, a pair (3, component), or a callable on
    ambient points.  r^2 is the chordal distance squared and x^k are frame
    coordinates at a_i; the ball is B_rho(a_i) with rho = ``ball_radius``.
    ``literal`` uses the printed cbar1 and ctilde1 instead of the corrected ones.
    """
    from .bubbles import bubble_eval, phi_fields
    from .quadrature import QuadratureSpec, ball_rule
    spec = spec or QuadratureSpec()
    t = table_for(cfg.n)
    n, tau = cfg.n, cfg.tau
    m = (n - 2) / 2
    pstar = (n + 2) / (n - 2)
    b, F = cfg.bubble(i), cfg.frames[i]
    lam = b.lam
    nu = _test_field(cfg, test_field, i)
    S = k_eval_suite(K, cfg.centers[i], F)
    cb1 = t.cbar1 if literal else t.cbar1_eff
    ct1 = t.ctilde1 if literal else t.ctilde1_eff
    ct2 = t.ctilde2 if literal else t.ctilde2_eff
    X, W = ball_rule(cfg.centers[i], F, ball_radius(cfg), lam, spec, spec.angular_degree + 6)
    D = chordal_sq(cfg.centers[i], X)
    xi = X @ F.T
    ph = bubble_eval(b, X)
    php = ph ** pstar
    lamdl = -phi_fields(b, 2, X, F)
    v = nu(X)
    l2r2 = lam * lam * D
    first = (php * m * np.log1p(l2r2) - cb1 / t.c1 * php
             + 2 / (n - 2) * ct1 / t.c2 * ph ** (4 / (n - 2)) * lamdl)
    second = (ct1 / ct2 * l2r2 / (2 * n) * php - ct1 * t.cbar2 / (ct2 * t.c1) * php
              + 2 / (n - 2) * ct1 / t.c2 * ph ** (4 / (n - 2)) * lamdl)
    quad = np.einsum("ak,kl,al->a", xi, S.hess, xi) / (2 * S.K) - S.laplacian / (2 * n * S.K) * D
    dens = -tau * first + tau * second - quad * php
    return float(cfg.alpha[i] * math.fsum(W * dens * v))


def measured_gradient_density(cfg: Configuration, K: KField, test_field, i: int = 0,
                              spec=None) -> float:
    """k_tau^{2/(p+1)} / (8n(n-1)) dJ(u)[nu] by quadrature over the whole sphere."""
    from .functional import eval_functional
    from .bubbles import bubble_eval
    from .quadrature import QuadratureSpec, integrate_with_error
    spec = spec or QuadratureSpec()
    n = cfg.n
    nu = _test_field(cfg, test_field, i)
    fv = eval_functional(cfg, K, spec, estimate_error=False)
    rho = fv.r / fv.k_tau
    pstar = (n + 2) / (n - 2)
    bs = [cfg.bubble(j) for j in range(cfg.q)]

    def f(X):
        ph = np.array([bubble_eval(b, X) for b in bs])
        u = cfg.alpha @ ph
        Lu = 4 * n * (n - 1) * (cfg.alpha @ ph ** pstar)
        return (Lu - rho * K.values(X) * u ** cfg.p) * nu(X)

    res = integrate_with_error(f, cfg, spec)
    return float(res.value) / (4 * n * (n - 1))


# ---------------------------------------------------------------------------
# Hessian blocks


@dataclass
class HessianBlockReport:
    lam_min: float
    max_off_block: float
    smallest_predicted_diag: float
    off_block_ratio: float
    max_intra_coupling: float
    alpha_eigenvalues: np.ndarray
    alpha_eig_scaled: np.ndarray        # eigenvalues times lam^2
    eta: float
    center_signs_ok: bool
    center_eigenvalues: list

    @property
    def passed(self) -> bool:
        ev = np.sort(self.alpha_eigenvalues)
        zero_ok = abs(ev[-1]) <= self.eta
        neg_ok = bool(np.all(ev[:-1] < -self.eta))
        return bool(self.off_block_ratio <= 0.1 and zero_ok and neg_ok and self.center_signs_ok)

    def to_json(self) -> dict:
        return {"lambda_min": self.lam_min, "max_off_block": self.max_off_block,
                "smallest_predicted_diag": self.smallest_predicted_diag,
                "off_block_ratio": self.off_block_ratio,
                "max_intra_block_coupling": self.max_intra_coupling,
                "alpha_eigenvalues": self.alpha_eigenvalues.tolist(),
                "alpha_eigenvalues_times_lambda2": self.alpha_eig_scaled.tolist(),
                "eta": self.eta, "center_signs_ok": self.center_signs_ok,
                "center_eigenvalues": [list(map(float, e)) for e in self.center_eigenvalues],
                "passed": self.passed}


def hessian_block_report(cfg: Configuration, K: KField, spec=None,
                         hess: np.ndarray | None = None) -> HessianBlockReport:
    """Compare the measured reduced Hessian with the predicted block form."""
    from .functional import eval_reduced_hessian
    q, n = cfg.q, cfg.n
    if hess is None:
        rd = eval_reduced_hessian(cfg, K, spec, estimate_error=False)
        hess, k_tau = rd.hess_reduced, rd.value.k_tau
    else:
        from .functional import eval_functional
        k_tau = eval_functional(cfg, K, spec, estimate_error=False).k_tau
    pred = expand_hessian_blocks(cfg, K, k_tau=k_tau)
    inb, off = block_masks(q, n)
    d = np.abs(np.diag(pred))
    smallest = float(np.min(d[d > 0]))
    max_off = float(np.max(np.abs(hess[off]))) if off.any() else 0.0
    cross = cross_bubble_mask(q, n)
    intra = float(np.max(np.abs(hess[cross]))) if cross.any() else 0.0
    A = hess[:q, :q]
    ev = np.linalg.eigvalsh(0.5 * (A + A.T))
    lam_min = float(np.min(cfg.lams))
    eta = 0.01 * smallest
    ok = True
    cev = []
    for i in range(q):
        s = 2 * q + i * n
        blk = hess[s:s + n, s:s + n]
        m_ev = np.linalg.eigvalsh(0.5 * (blk + blk.T))
        k_ev = np.linalg.eigvalsh(k_eval_suite(K, cfg.centers[i], cfg.frames[i]).hess)
        # -grad^2 K/K reverses the order: the largest measured pairs with the smallest K-eigenvalue
        ok = ok and bool(np.all(np.sign(m_ev) == -np.sign(k_ev[::-1])))
        cev.append(m_ev)
    return HessianBlockReport(lam_min, max_off, smallest, max_off / smallest, intra, ev,
                              ev * lam_min ** 2, eta, ok, cev)
