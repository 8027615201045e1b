"""Bubbles on S^n, their parameter derivative fields and interaction terms.

In the flat chart at a (coordinate z, u_a(a) = 1) a bubble reads
u_a(z) (lam / (1 + lam^2 |z|^2))^{(n-2)/2}.  Written in ambient terms with
D = |x - a|^2 this is

    phi_{a,lam}(x) = (lam / (1 + (lam^2 - 1/4) D))^{(n-2)/2},

which is smooth on the whole sphere, including the antipode of a.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import SpherePoint, chordal_sq, exp_map, geodesic_distance, tangent_frame


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class BubbleParams:
    a: SpherePoint
    lam: float

    def __post_init__(self) -> None:
        if not self.lam >= 1.0:
            raise ConfigurationError(f"concentration parameter {self.lam} < 1")

    @property
    def n(self) -> int:
        return self.a.n

    @property
    def frame(self) -> np.ndarray:
        return tangent_frame(self.a.coords)


def _profile(n: int, lam: float, D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = 1.0 + (lam * lam - 0.25) * D
    return (lam / g) ** ((n - 2) / 2), g


def bubble_eval(b: BubbleParams, x: SpherePoint | np.ndarray) -> np.ndarray | float:
    X = x.coords if isinstance(x, SpherePoint) else np.asarray(x, dtype=float)
    D = chordal_sq(b.a.coords, X)
    phi, _ = _profile(b.n, b.lam, D)
    return float(phi) if np.ndim(phi) == 0 else phi


def phi_fields(b: BubbleParams, k: int, x: SpherePoint | np.ndarray,
               frame: np.ndarray | None = None) -> np.ndarray | float:
    """phi_1 = phi, phi_2 = -lam d_lam phi, phi_3 = lam^{-1} grad_a phi (frame components)."""
    n, lam = b.n, b.lam
    X = x.coords if isinstance(x, SpherePoint) else np.asarray(x, dtype=float)
    D = chordal_sq(b.a.coords, X)
    phi, g = _profile(n, lam, D)
    m = (n - 2) / 2
    if k == 1:
        return phi
    if k == 2:
        return -m * phi * (1.0 - (lam * lam + 0.25) * D) / g
    if k == 3:
        E = b.frame if frame is None else frame
        xi = X @ E.T
        mu = lam * lam - 0.25
        coef = 2.0 * m * mu * phi / (lam * g)
        return coef[..., None] * xi if np.ndim(coef) else coef * xi
    raise ValueError("k must be 1, 2 or 3")


def interaction_eps(bi: BubbleParams, bj: BubbleParams) -> float:
    n = bi.n
    li, lj = bi.lam, bj.lam
    D = float(chordal_sq(bi.a.coords, bj.a.coords))
    E = lj / li + li / lj + li * lj * D
    return E ** ((2 - n) / 2)


@dataclass
class EpsDerivatives:
    eps: float
    lam_j: float            # lam_j d/dlam_j eps
    center_j: np.ndarray    # lam_j^{-1} grad_{a_j} eps in the frame at a_j


def interaction_eps_derivatives(bi: BubbleParams, bj: BubbleParams,
                                frame_j: np.ndarray | None = None) -> EpsDerivatives:
    n = bi.n
    m = (n - 2) / 2
    li, lj = bi.lam, bj.lam
    ai, aj = bi.a.coords, bj.a.coords
    D = float(chordal_sq(ai, aj))
    E = lj / li + li / lj + li * lj * D
    eps = E ** (-m)
    dE_lam = lj / li - li / lj + li * lj * D
    Ej = bj.frame if frame_j is None else frame_j
    dD = -2.0 * (Ej @ ai)
    pref = -m * E ** (-m - 1)
    return EpsDerivatives(eps, pref * dE_lam, pref * li * dD)


@dataclass
class Configuration:
    n: int
    tau: float
    alpha: np.ndarray
    centers: np.ndarray   # (q, n+1)
    lams: np.ndarray
    d_min: float = 0.1
    frames: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.alpha = np.array(self.alpha, dtype=float).reshape(-1)
        self.lams = np.array(self.lams, dtype=float).reshape(-1)
        c = np.array(self.centers, dtype=float).reshape(len(self.alpha), -1)
        self.centers = c / np.linalg.norm(c, axis=1, keepdims=True)
        q = len(self.alpha)
        if self.centers.shape != (q, self.n + 1) or self.lams.shape != (q,):
            raise ConfigurationError("inconsistent configuration shapes")
        if self.n < 3:
            raise ConfigurationError("dimension too small")
        if self.tau < 0:
            raise ConfigurationError("tau must be non-negative")
        if np.any(self.alpha <= 0):
            raise ConfigurationError("amplitudes must be positive")
        if np.any(~(self.lams >= 1.0)):
            raise ConfigurationError("concentration parameters must be >= 1")
        for i in range(q):
            for j in range(i + 1, q):
                if geodesic_distance(self.centers[i], self.centers[j]) < self.d_min:
                    raise ConfigurationError(f"centers {i} and {j} closer than d_min")
        if self.frames is None:
            self.frames = np.array([tangent_frame(a) for a in self.centers])

    @property
    def q(self) -> int:
        return len(self.alpha)

    @property
    def p(self) -> float:
        return (self.n + 2) / (self.n - 2) - self.tau

    @property
    def theta(self) -> float:
        return (self.n - 2) / 2 * self.tau

    def bubble(self, i: int) -> BubbleParams:
        return BubbleParams(SpherePoint(self.centers[i]), float(self.lams[i]))

    def copy(self, **kw) -> "Configuration":
        base = dict(n=self.n, tau=self.tau, alpha=self.alpha.copy(), centers=self.centers.copy(),
                    lams=self.lams.copy(), d_min=self.d_min)
        base.update(kw)
        return Configuration(**base)

    def eps_matrix(self) -> np.ndarray:
        q = self.q
        out = np.zeros((q, q))
        for i in range(q):
            for j in range(q):
                if i != j:
                    out[i, j] = interaction_eps(self.bubble(i), self.bubble(j))
        return out

    def moved(self, d_alpha: np.ndarray, d_s: np.ndarray, d_v: np.ndarray) -> "Configuration":
        """New configuration after a step in (alpha, log lam, tangent center) coordinates."""
        centers = np.array([exp_map(self.centers[i], d_v[i] @ self.frames[i])
                            for i in range(self.q)])
        return self.copy(alpha=self.alpha + d_alpha, lams=self.lams * np.exp(d_s), centers=centers)

    def to_json(self) -> dict:
        return {
            "n": self.n, "tau": self.tau, "alpha": self.alpha.tolist(),
            "centers": self.centers.tolist(), "lambdas": self.lams.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Configuration":
        return cls(n=int(d["n"]), tau=float(d["tau"]), alpha=d["alpha"], centers=d["centers"],
                   lams=d["lambdas"])


def alpha_K_tau(cfg: Configuration, Kvals: Sequence[float]) -> float:
    """alpha_{K,tau}^{p+1} := sum_i K_i alpha_i^{p+1} / lam_i^theta."""
    th = cfg.theta
    return float(sum(Kvals[i] * cfg.alpha[i] ** (cfg.p + 1) * math.exp(-th * math.log(cfg.lams[i]))
                     for i in range(cfg.q)))
