"""J_tau = r / k_tau^{2/(p+1)} and its variations on bubble sums, by quadrature.

r uses L phi = 4n(n-1) phi^{(n+2)/(n-2)}, so no derivative is ever taken
numerically.  Directional derivatives are taken along the parameter fields

    d u / d alpha_i = phi_i,   d u / d log lam_i,   d u / d v_{i,k}

where v_i moves a_i along the exponential map in the tangent frame of a_i.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bubbles import Configuration
from .geometry import KField
from .kernel import accumulate
from .quadrature import QuadratureSpec, map_reduce


@dataclass
class FunctionalValue:
    J: float
    r: float
    k_tau: float
    error: float = 0.0

    def to_json(self) -> dict:
        return {"J": self.J, "r": self.r, "k_tau": self.k_tau, "error_estimate": self.error}


@dataclass
class ReducedDerivatives:
    """Gradient and Hessian of J_tau restricted to the bubble manifold.

    ``grad`` holds dJ[phi_{k,i}] with phi_1 = phi, phi_2 = -lam d_lam phi and
    phi_3 = lam^{-1} grad_a phi.  ``hess`` is the second variation evaluated on
    the scaled basis (phi_i / lam_i, lam_i d_lam phi_i, lam_i^{-1} grad_a phi_i);
    ``hess_reduced`` adds dJ[d^2 u], i.e. it is the Hessian of the reduced
    function in the same scaling.  Index order: alpha block, lam block,
    center block (bubble-major, frame components within).
    """
    grad: np.ndarray
    hess: np.ndarray | None
    hess_reduced: np.ndarray | None
    basis_scaling: np.ndarray
    param_grad: np.ndarray
    param_hess: np.ndarray | None
    value: FunctionalValue
    grad_error: float = 0.0
    hess_error: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "grad": self.grad.tolist(),
            "basis_scaling": self.basis_scaling.tolist(),
            "value": self.value.to_json(),
            "grad_error_estimate": self.grad_error,
        }
        if self.hess is not None:
            out["hess"] = self.hess.tolist()
            out["hess_reduced"] = self.hess_reduced.tolist()
            out["hess_error_estimate"] = self.hess_error
        return out


def _degree(K: KField) -> int:
    return K.degree + 4


def moments(cfg: Configuration, K: KField, spec: QuadratureSpec, level: int,
            node_config: Configuration | None = None) -> dict[str, np.ndarray]:
    if K.n != cfg.n:
        raise ValueError("K and configuration live on different spheres")
    frames = np.ascontiguousarray(cfg.frames)
    centers = np.ascontiguousarray(cfg.centers)
    lams = np.ascontiguousarray(cfg.lams)
    alpha = np.ascontiguousarray(cfg.alpha)
    p = cfg.p

    def work(X, W):
        return accumulate(np.ascontiguousarray(X), np.ascontiguousarray(W), K.values(X),
                          centers, frames, lams, alpha, p, level)

    return map_reduce(node_config or cfg, spec, _degree(K), work)


def _value(mo: dict, cfg: Configuration) -> FunctionalValue:
    r = float(mo["r"][0])
    k = float(mo["k"][0])
    beta = 2.0 / (cfg.p + 1.0)
    return FunctionalValue(r / k ** beta, r, k)


def eval_functional(cfg: Configuration, K: KField, spec: QuadratureSpec | None = None,
                    estimate_error: bool = True,
                    node_config: Configuration | None = None) -> FunctionalValue:
    """J_tau, r and k_tau of ``cfg``.

    ``node_config`` places the quadrature nodes for another (nearby)
    configuration; finite differences taken on a frozen rule are free of
    node-motion noise.
    """
    spec = spec or QuadratureSpec()
    fv = _value(moments(cfg, K, spec, 0, node_config), cfg)
    if estimate_error:
        coarse = _value(moments(cfg, K, spec.coarsened(), 0, node_config), cfg)
        fv.error = abs(fv.J - coarse.J)
    return fv


def basis_scaling(cfg: Configuration) -> np.ndarray:
    """Factors mapping parameter fields onto the scaled basis."""
    n = cfg.n
    return np.concatenate([1.0 / cfg.lams, 1.0 / cfg.alpha,
                           np.repeat(1.0 / (cfg.alpha * cfg.lams), n)])


def _phi_basis(cfg: Configuration) -> np.ndarray:
    n = cfg.n
    return np.concatenate([np.ones(cfg.q), -1.0 / cfg.alpha,
                           np.repeat(1.0 / (cfg.alpha * cfg.lams), n)])


def _assemble(mo: dict, cfg: Configuration, level: int) -> dict[str, np.ndarray]:
    q, n = cfg.q, cfg.n
    p = cfg.p
    fv = _value(mo, cfg)
    r, k = fv.r, fv.k_tau
    beta = 2.0 / (p + 1.0)
    kb = k ** (-beta)
    rho = r / k
    R = mo["LuT"]
    Kv = mo["KupT"]
    out = {"value": fv, "pgrad": 2.0 * kb * (R - rho * Kv)}
    if level < 2:
        return out
    A1 = 0.5 * (mo["A1"] + mo["A1"].T)
    bil = (2.0 * kb * (A1 - p * rho * mo["A2"])
           - 4.0 * kb / k * (np.outer(R, Kv) + np.outer(Kv, R))
           + 2.0 * (p + 3.0) * r * kb / k ** 2 * np.outer(Kv, Kv))
    bil = 0.5 * (bil + bil.T)
    sd = np.zeros_like(bil)
    for i in range(q):
        idx = [i, q + i] + [2 * q + i * n + k_ for k_ in range(n)]
        blk = mo["SL"][i] - rho * mo["SK"][i]
        sd[np.ix_(idx, idx)] = 2.0 * kb * blk
    out["bil"] = bil
    out["phess"] = bil + 0.5 * (sd + sd.T)
    return out


def _derivatives(cfg: Configuration, K: KField, spec: QuadratureSpec, level: int,
                 node_config: Configuration | None = None) -> dict:
    return _assemble(moments(cfg, K, spec, level, node_config), cfg, level)


def eval_reduced_gradient(cfg: Configuration, K: KField, spec: QuadratureSpec | None = None,
                          estimate_error: bool = True,
                          node_config: Configuration | None = None) -> ReducedDerivatives:
    spec = spec or QuadratureSpec()
    res = _derivatives(cfg, K, spec, 1, node_config)
    err = 0.0
    if estimate_error:
        co = _derivatives(cfg, K, spec.coarsened(), 1, node_config)
        err = float(np.max(np.abs(co["pgrad"] - res["pgrad"]) * np.abs(_phi_basis(cfg))))
        res["value"].error = abs(co["value"].J - res["value"].J)
    return ReducedDerivatives(
        grad=res["pgrad"] * _phi_basis(cfg), hess=None, hess_reduced=None,
        basis_scaling=basis_scaling(cfg), param_grad=res["pgrad"], param_hess=None,
        value=res["value"], grad_error=err)


def eval_reduced_hessian(cfg: Configuration, K: KField, spec: QuadratureSpec | None = None,
                         estimate_error: bool = True) -> ReducedDerivatives:
    spec = spec or QuadratureSpec()
    res = _derivatives(cfg, K, spec, 2)
    S = basis_scaling(cfg)
    hess = S[:, None] * res["bil"] * S[None, :]
    hred = S[:, None] * res["phess"] * S[None, :]
    gerr = herr = 0.0
    if estimate_error:
        co = _derivatives(cfg, K, spec.coarsened(), 2)
        gerr = float(np.max(np.abs(co["pgrad"] - res["pgrad"]) * np.abs(_phi_basis(cfg))))
        herr = float(np.max(np.abs(S[:, None] * (co["phess"] - res["phess"]) * S[None, :])))
        res["value"].error = abs(co["value"].J - res["value"].J)
    return ReducedDerivatives(
        grad=res["pgrad"] * _phi_basis(cfg), hess=hess, hess_reduced=hred,
        basis_scaling=S, param_grad=res["pgrad"], param_hess=res["phess"],
        value=res["value"], grad_error=gerr, hess_error=herr)


def fd_param_gradient(cfg: Configuration, K: KField, spec: QuadratureSpec | None = None,
                      h: float = 5e-3) -> np.ndarray:
    """Fourth-order central differences of J_tau in (alpha, log lam, v).

    Steps are relative in alpha, absolute in log lam and h / lam_i in v_i.
    Nodes stay frozen at ``cfg`` so the difference quotient sees one smooth
    discrete functional.
    """
    q, n = cfg.q, cfg.n
    M = q * (n + 2)
    out = np.empty(M)
    for k in range(M):
        d = np.zeros(M)
        if k < q:
            d[k] = h * cfg.alpha[k]
        elif k < 2 * q:
            d[k] = h
        else:
            d[k] = h / cfg.lams[(k - 2 * q) // n]

        def J(t: float) -> float:
            st = t * d
            moved = cfg.moved(st[:q], st[q:2 * q], st[2 * q:].reshape(q, n))
            return eval_functional(moved, K, spec, estimate_error=False, node_config=cfg).J

        out[k] = (8.0 * (J(1) - J(-1)) - (J(2) - J(-2))) / (12.0 * d[k])
    return out
