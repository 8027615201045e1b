"""Reduced critical-point problem for q-bubble configurations.

Newton iterates in the scaled basis on the complement of the amplitude
scaling direction (J_tau is invariant under alpha -> c alpha).  After every
step alpha is rescaled onto k_tau = 1; k_tau is homogeneous of degree p + 1
in alpha, so the rescaling and the transformed derivatives are exact.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bubbles import Configuration
from .constants import ConstantsTable
from .expansions import center_balance, expand_hessian_blocks, table_for
from .functional import FunctionalValue, ReducedDerivatives, eval_reduced_gradient, eval_reduced_hessian
from .geometry import (CriticalPoint, KField, exp_map, geodesic_distance, gamma_n, green_g0,
                       k_eval_suite)
from .geometry import SpherePoint
from .quadrature import QuadratureSpec

log = logging.getLogger(__name__)


class PositiveLaplacianError(ValueError):
    pass


class TauTooLargeError(ValueError):
    pass


class NoConvergenceError(RuntimeError):
    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


class LeftNeighborhoodError(RuntimeError):
    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


class NearKernelError(RuntimeError):
    pass


NORMALIZATIONS = ("k_tau", "energy")


@dataclass
class TargetSpec:
    targets: list[CriticalPoint]
    tau: float
    normalization: str = "k_tau"
    lam_min: float = 10.0

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if not self.targets:
            raise ValueError("at least one target is required")
        for i, a in enumerate(self.targets):
            if a.laplacian >= 0:
                raise PositiveLaplacianError(f"target {i} has non-negative laplacian {a.laplacian:.4g}")
            for b in self.targets[:i]:
                if geodesic_distance(a.location, b.location) < 1e-8:
                    raise ValueError("targets must be distinct")

    @property
    def n(self) -> int:
        return self.targets[0].location.n

    @property
    def q(self) -> int:
        return len(self.targets)

    def formula_index(self) -> int:
        return self.q - 1 + sum(self.n - t.morse_index for t in self.targets)


@dataclass
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 40
    d_min: float = 0.1
    max_lam_factor: float = 4.0
    max_step_s: float = 0.5
    max_backtracks: int = 4


@dataclass
class IterationRecord:
    iteration: int
    residual: float
    step_norm: float
    damping: float
    lams: list[float]

    def row(self) -> list:
        return [self.iteration, self.residual, self.step_norm, self.damping] + self.lams


@dataclass
class MorseCertificate:
    index: int
    formula: int | None
    eigenvalues: np.ndarray
    eta: float
    predicted_diagonal: np.ndarray

    def to_json(self) -> dict:
        return {"index": self.index, "formula": self.formula, "eta": self.eta,
                "eigenvalues": self.eigenvalues.tolist(),
                "predicted_diagonal": self.predicted_diagonal.tolist()}


@dataclass
class SolveResult:
    config: Configuration
    residual_norm: float
    newton_iterations: int
    theta_hat: float
    membership: dict
    morse_index: int | None = None
    hessian_eigenvalues: np.ndarray | None = None
    trace: list[IterationRecord] = field(default_factory=list)
    derivatives: ReducedDerivatives | None = None
    targets: TargetSpec | None = None
    certificate: MorseCertificate | None = None
    k_values: np.ndarray | None = None

    def summary(self) -> dict:
        cfg = self.config
        n = cfg.n
        Ks = self.k_values if self.k_values is not None else np.full(cfg.q, np.nan)
        return {
            "tau": cfg.tau,
            "lambda_sqrt_tau": (cfg.lams * math.sqrt(cfg.tau)).tolist(),
            "lambda2_tau": (cfg.lams ** 2 * cfg.tau).tolist(),
            "alpha_K_power": (cfg.alpha * Ks ** ((n - 2) / 4)).tolist(),
            "J": self.derivatives.value.J if self.derivatives else None,
        }

    def to_json(self) -> dict:
        out = {
            "config": self.config.to_json(),
            "residual_norm": self.residual_norm,
            "newton_iterations": self.newton_iterations,
            "theta_hat": self.theta_hat,
            "membership": self.membership,
            "morse_index": self.morse_index,
            "hessian_eigenvalues": None if self.hessian_eigenvalues is None
            else self.hessian_eigenvalues.tolist(),
            "summary": self.summary(),
        }
        if self.targets is not None:
            out["formula_index"] = self.targets.formula_index()
            out["targets"] = [t.to_json() for t in self.targets.targets]
        if self.certificate is not None:
            out["certificate"] = self.certificate.to_json()
        return out


# ---------------------------------------------------------------------------
# initial guess


def balance_lambda(cp: CriticalPoint, tau: float, table: ConstantsTable) -> float:
    return math.sqrt(-(table.ctilde2_eff / table.ctilde1_eff) * cp.laplacian / (cp.value * tau))


def initial_guess(spec: TargetSpec, K: KField, table: ConstantsTable | None = None,
                  d_min: float = 0.1) -> Configuration:
    """Leading-order balance point for the given targets."""
    n = spec.n
    t = table or table_for(n)
    tau = spec.tau
    p = (n + 2) / (n - 2) - tau
    theta = (n - 2) / 2 * tau
    lams, centers, alpha = [], [], []
    for j, cp in enumerate(spec.targets):
        lam = balance_lambda(cp, tau, t)
        if lam < spec.lam_min:
            raise TauTooLargeError(f"target {j}: predicted lambda {lam:.3g} below {spec.lam_min}")
        x = cp.location.coords
        abar = center_balance(K, x, lam, n, t)
        centers.append(exp_map(x, abar @ k_eval_suite(K, x).frame))
        lams.append(lam)
        alpha.append((lam ** theta / cp.value) ** (1.0 / (p - 1.0)))
    cfg = Configuration(n, tau, alpha, centers, lams, d_min=d_min)
    return _normalize_leading(cfg, K, t, spec.normalization)


def _normalize_leading(cfg: Configuration, K: KField, t: ConstantsTable, how: str) -> Configuration:
    Kv = K.values(cfg.centers)
    lt = np.exp(cfg.theta * np.log(cfg.lams))
    if how == "k_tau":
        k = t.cbar0 * float(np.sum(Kv * cfg.alpha ** (cfg.p + 1) / lt))
        c = k ** (-1.0 / (cfg.p + 1))
    else:
        r = 4 * cfg.n * (cfg.n - 1) * t.cbar0 * float(cfg.alpha @ cfg.alpha)
        c = r ** -0.5
    return cfg.copy(alpha=cfg.alpha * c)


def _norm_factor(cfg: Configuration, rd: ReducedDerivatives, how: str) -> float:
    if how == "k_tau":
        return rd.value.k_tau ** (-1.0 / (cfg.p + 1))
    return rd.value.r ** -0.5


def normalize(cfg: Configuration, rd: ReducedDerivatives, how: str = "k_tau") -> Configuration:
    """Exact rescaling of alpha to the normalization slice."""
    return cfg.copy(alpha=cfg.alpha * _norm_factor(cfg, rd, how))


def rescale_derivatives(rd: ReducedDerivatives, cfg: Configuration, c: float) -> ReducedDerivatives:
    """Derivatives at alpha -> c alpha, from homogeneity (J has degree 0 in alpha)."""
    q = cfg.q
    w = np.ones(rd.param_grad.size)
    w[:q] = 1.0 / c
    val = FunctionalValue(rd.value.J, rd.value.r * c * c, rd.value.k_tau * c ** (cfg.p + 1),
                          rd.value.error)
    ph = None if rd.param_hess is None else rd.param_hess * np.outer(w, w)
    return ReducedDerivatives(
        grad=rd.grad / c,
        hess=None if rd.hess is None else rd.hess / (c * c),
        hess_reduced=None if rd.hess_reduced is None else rd.hess_reduced / (c * c),
        basis_scaling=rd.basis_scaling * np.where(np.arange(w.size) < q, 1.0, 1.0 / c),
        param_grad=rd.param_grad * w, param_hess=ph, value=val,
        grad_error=rd.grad_error / c, hess_error=rd.hess_error / (c * c))


def _eval_normalized(cfg: Configuration, K: KField, spec: QuadratureSpec,
                     how: str) -> tuple[Configuration, ReducedDerivatives]:
    rd = eval_reduced_hessian(cfg, K, spec, estimate_error=False)
    c = _norm_factor(cfg, rd, how)
    return cfg.copy(alpha=cfg.alpha * c), rescale_derivatives(rd, cfg, c)


# ---------------------------------------------------------------------------
# Newton


def _scaling_direction(cfg: Configuration) -> np.ndarray:
    """Amplitude scaling direction in the scaled basis."""
    q, n = cfg.q, cfg.n
    w = np.zeros(q * (n + 2))
    w[:q] = cfg.alpha * cfg.lams
    return w / np.linalg.norm(w)


def slice_basis(cfg: Configuration) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of the scaling direction."""
    w = _scaling_direction(cfg)
    M = w.size
    Q, _ = np.linalg.qr(np.column_stack([w, np.eye(M)]))
    return Q[:, 1:M]


def _residual(rd: ReducedDerivatives) -> float:
    return float(np.linalg.norm(rd.grad))


def _scaled_grad(rd: ReducedDerivatives) -> np.ndarray:
    return rd.basis_scaling * rd.param_grad


def _limit_step(cfg: Configuration, dx: np.ndarray, opts: SolverOptions) -> float:
    q, n = cfg.q, cfg.n
    da, ds, dv = dx[:q], dx[q:2 * q], dx[2 * q:].reshape(q, n)
    f = 1.0
    ra = float(np.max(np.abs(da) / cfg.alpha))
    if ra > 0.5:
        f = min(f, 0.5 / ra)
    ms = float(np.max(np.abs(ds)))
    if ms > opts.max_step_s:
        f = min(f, opts.max_step_s / ms)
    mv = float(np.max(np.linalg.norm(dv, axis=1)))
    cap = opts.d_min / 4
    if mv > cap:
        f = min(f, cap / mv)
    return f


def _check_neighborhood(cfg: Configuration, ref: Configuration, targets: np.ndarray | None,
                        opts: SolverOptions, trace: list) -> None:
    ratio = cfg.lams / ref.lams
    if np.any(ratio > opts.max_lam_factor) or np.any(ratio < 1.0 / opts.max_lam_factor):
        raise LeftNeighborhoodError("lambda changed by more than the allowed factor", trace)
    anchors = targets if targets is not None else ref.centers
    for j in range(cfg.q):
        if geodesic_distance(cfg.centers[j], anchors[j]) > opts.d_min / 2:
            raise LeftNeighborhoodError(f"center {j} drifted beyond d_min/2", trace)


def newton_solve(cfg0: Configuration, K: KField, spec: QuadratureSpec | None = None,
                 opts: SolverOptions | None = None, targets: TargetSpec | None = None,
                 morse: bool = True) -> SolveResult:
    """Damped Newton for the reduced gradient on the normalization slice."""
    spec = spec or QuadratureSpec()
    opts = opts or SolverOptions()
    how = targets.normalization if targets else "k_tau"
    anchors = (np.array([t.location.coords for t in targets.targets]) if targets else None)
    q, n = cfg0.q, cfg0.n
    cfg = cfg0
    cfg, rd = _eval_normalized(cfg, K, spec, how)
    res = _residual(rd)
    trace = [IterationRecord(0, res, 0.0, 1.0, cfg.lams.tolist())]
    it = 0
    while res > opts.tol:
        if it >= opts.max_iter:
            raise NoConvergenceError(f"no convergence after {it} iterations (residual {res:.3e})", trace)
        it += 1
        Q = slice_basis(cfg)
        H = Q.T @ rd.hess_reduced @ Q
        g = Q.T @ _scaled_grad(rd)
        y = -np.linalg.solve(H, g)
        dx = rd.basis_scaling * (Q @ y)
        f = _limit_step(cfg, dx, opts)
        for _ in range(opts.max_backtracks + 1):
            step = f * dx
            trial = cfg.moved(step[:q], step[q:2 * q], step[2 * q:].reshape(q, n))
            _check_neighborhood(trial, cfg0, anchors, opts, trace)
            trial, rd_t = _eval_normalized(trial, K, spec, how)
            res_t = _residual(rd_t)
            if res_t < res or f < 2.0 ** -opts.max_backtracks:
                break
            f *= 0.5
        cfg, rd, res = trial, rd_t, res_t
        trace.append(IterationRecord(it, res, float(np.linalg.norm(f * dx)), f, cfg.lams.tolist()))
        log.info("newton %d residual %.3e damping %.3g", it, res, f)
    _check_neighborhood(cfg, cfg0, anchors, opts, trace)
    out = SolveResult(cfg, res, it, theta_hat(cfg, K), membership(cfg, K, targets),
                      trace=trace, derivatives=rd, targets=targets,
                      k_values=K.values(cfg.centers))
    if morse:
        cert = morse_index(out, K)
        out.morse_index = cert.index
        out.hessian_eigenvalues = cert.eigenvalues
        out.certificate = cert
    return out


def solve(targets: TargetSpec, K: KField, spec: QuadratureSpec | None = None,
          opts: SolverOptions | None = None, morse: bool = True) -> SolveResult:
    opts = opts or SolverOptions()
    cfg0 = initial_guess(targets, K, d_min=opts.d_min)
    return newton_solve(cfg0, K, spec, opts, targets, morse)


# ---------------------------------------------------------------------------
# diagnostics


def theta_hat(cfg: Configuration, K: KField) -> float:
    """Least-squares Theta in alpha_j = Theta (lam_j^theta / K(a_j))^{1/(p-1)}."""
    Kv = K.values(cfg.centers)
    base = (np.exp(cfg.theta * np.log(cfg.lams)) / Kv) ** (1.0 / (cfg.p - 1.0))
    return float(base @ cfg.alpha / (base @ base))


def _log_map(x: np.ndarray, a: np.ndarray, frame: np.ndarray) -> np.ndarray:
    c = float(np.clip(x @ a, -1.0, 1.0))
    w = a - c * x
    nw = np.linalg.norm(w)
    if nw == 0.0:
        return np.zeros(frame.shape[0])
    return frame @ (w / nw) * math.acos(c)


def membership(cfg: Configuration, K: KField, targets: TargetSpec | None,
               table: ConstantsTable | None = None) -> dict:
    """Residuals of the refined-neighbourhood conditions, in units of their bounds."""
    t = table or table_for(cfg.n)
    n = cfg.n
    lam = 1.0 / math.sqrt(cfg.tau) if cfg.tau > 0 else float(np.max(cfg.lams))
    Th = theta_hat(cfg, K)
    Kv = K.values(cfg.centers)
    base = (np.exp(cfg.theta * np.log(cfg.lams)) / Kv) ** (1.0 / (cfg.p - 1.0))
    cond1 = float(np.max(np.abs(cfg.alpha - Th * base))) * lam ** 3
    out = {"alpha_condition": cond1}
    if targets is not None and cfg.tau > 0:
        c2, c3 = [], []
        for j, cp in enumerate(targets.targets):
            x = cp.location.coords
            s = k_eval_suite(K, x)
            abar = _log_map(x, cfg.centers[j], s.frame)
            pred = center_balance(K, x, cfg.lams[j], n, t)
            c2.append(float(np.linalg.norm(abar - pred)) / cfg.lams[j] * lam ** 3)
            bal = -(t.ctilde2_eff / t.ctilde1_eff) * cp.laplacian / (cp.value * cfg.tau)
            c3.append(abs(cfg.lams[j] ** 2 / bal - 1.0))
        out["center_condition"] = max(c2)
        out["lambda_condition_relative"] = max(c3)
    return out


def morse_index(result: SolveResult, K: KField, spec: QuadratureSpec | None = None) -> MorseCertificate:
    """Index of the reduced Hessian restricted to the normalization slice."""
    cfg = result.config
    rd = result.derivatives
    if rd is None or rd.hess_reduced is None:
        rd = eval_reduced_hessian(cfg, K, spec, estimate_error=False)
    pred = expand_hessian_blocks(cfg, K, k_tau=rd.value.k_tau)
    d = np.abs(np.diag(pred))
    eta = 0.01 * float(np.min(d[d > 0]))
    Q = slice_basis(cfg)
    H = Q.T @ rd.hess_reduced @ Q
    ev = np.linalg.eigvalsh(0.5 * (H + H.T))
    if np.any(np.abs(ev) < eta):
        raise NearKernelError(f"eigenvalue within eta={eta:.3e} of zero: {ev[np.argmin(np.abs(ev))]:.3e}")
    formula = result.targets.formula_index() if result.targets else None
    return MorseCertificate(int(np.sum(ev < -eta)), formula, ev, eta, np.diag(pred))


def sweep_tau(targets: TargetSpec, tau_list: Sequence[float], K: KField,
              spec: QuadratureSpec | None = None, opts: SolverOptions | None = None,
              morse: bool = True) -> list[SolveResult]:
    """Continuation in tau, warm-starting each solve from the previous solution."""
    taus = list(tau_list)
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau_list must be strictly decreasing")
    opts = opts or SolverOptions()
    out: list[SolveResult] = []
    prev: SolveResult | None = None
    for tau in taus:
        ts = TargetSpec(targets.targets, tau, targets.normalization, targets.lam_min)
        guess = initial_guess(ts, K, d_min=opts.d_min)
        if prev is not None:
            # keep the converged shape, rescale lambda by the balance law
            ratio = math.sqrt(prev.config.tau / tau)
            guess = guess.copy(alpha=prev.config.alpha, centers=prev.config.centers,
                               lams=prev.config.lams * ratio)
        res = newton_solve(guess, K, spec, opts, ts, morse)
        out.append(res)
        prev = res
    return out


def upper_bound_expression(cfg: Configuration, K: KField) -> float:
    """tau + sum |grad K_r|/lam_r + 1/lam_r^2 + |1 - ...| + eps^{(n+2)/(2n)}."""
    from .expansions import alpha_K
    n = cfg.n
    aK = alpha_K(cfg, K)
    a2 = float(cfg.alpha @ cfg.alpha)
    eps = cfg.eps_matrix()
    tot = cfg.tau
    for r in range(cfg.q):
        s = k_eval_suite(K, cfg.centers[r])
        lt = math.exp(cfg.theta * math.log(cfg.lams[r]))
        tot += float(np.linalg.norm(s.grad)) / cfg.lams[r] + cfg.lams[r] ** -2
        tot += abs(1.0 - a2 / aK * s.K / lt * cfg.alpha[r] ** (cfg.p - 1))
        for q_ in range(cfg.q):
            if q_ != r:
                tot += eps[r, q_] ** ((n + 2) / (2 * n))
    return tot


def lower_bound_expression(cfg: Configuration, K: KField, targets: TargetSpec,
                           table: ConstantsTable | None = None) -> float:
    """Cascade lower bound near the targets (H = 0 on the round sphere)."""
    t = table or table_for(cfg.n)
    n = cfg.n
    tot = 0.0
    Th = theta_hat(cfg, K)
    for j, cp in enumerate(targets.targets):
        x = cp.location.coords
        s = k_eval_suite(K, x)
        lam = cfg.lams[j]
        term = cfg.tau + (t.ctilde2_eff / t.ctilde1_eff) * cp.laplacian / (cp.value * lam ** 2)
        if n == 5:
            for i, ci in enumerate(targets.targets):
                if i != j:
                    G = green_g0(SpherePoint(ci.location.coords), SpherePoint(x))
                    term += (512 / (9 * math.pi)) * math.sqrt(cp.value / ci.value) * G / (
                        gamma_n(n) * (cfg.lams[i] * lam) ** 1.5)
        tot += abs(term)
        abar = _log_map(x, cfg.centers[j], s.frame)
        tot += float(np.linalg.norm(abar / lam - center_balance(K, x, lam, n, t) / lam))
        base = (math.exp(cfg.theta * math.log(lam)) / float(K.values(cfg.centers[j:j + 1])[0])) ** (
            1.0 / (cfg.p - 1.0))
        tot += abs(cfg.alpha[j] - Th * base)
    return tot


@dataclass
class BoundReport:
    measured: float
    upper: float
    lower: float | None

    def to_json(self) -> dict:
        return {"measured_gradient": self.measured, "upper_bound_expression": self.upper,
                "lower_bound_expression": self.lower,
                "measured_over_upper": self.measured / self.upper if self.upper else None,
                "measured_over_lower": (self.measured / self.lower) if self.lower else None}


def lower_bound_diagnostic(cfg: Configuration, K: KField, targets: TargetSpec | None = None,
                           spec: QuadratureSpec | None = None) -> BoundReport:
    """Measured |dJ| at k_tau = 1 against the upper-bound and cascade expressions."""
    rd = eval_reduced_gradient(cfg, K, spec, estimate_error=False)
    cfg = normalize(cfg, rd)
    rd = eval_reduced_gradient(cfg, K, spec, estimate_error=False)
    up = upper_bound_expression(cfg, K)
    lo = lower_bound_expression(cfg, K, targets) if targets is not None else None
    return BoundReport(_residual(rd), up, lo)
