"""The round sphere S^n in R^{n+1}: charts, Green function and Morse functions."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class AntipodeSingularityError(ValueError):
    pass


class CoincidentPointsError(ValueError):
    pass


class DegenerateCriticalPointError(ValueError):
    pass


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_volume(n: int) -> float:
    """Volume of the round unit S^n."""
    return 2.0 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)


@dataclass(frozen=True)
class SpherePoint:
    coords: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coords, dtype=float).copy()
        nrm = np.linalg.norm(c)
        if not np.isfinite(nrm) or nrm == 0.0:
            raise ValueError("cannot normalise a zero vector")
        c /= nrm
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.shape[0] - 1

    @classmethod
    def basis(cls, n: int, k: int, sign: float = 1.0) -> "SpherePoint":
        e = np.zeros(n + 1)
        e[k] = sign
        return cls(e)


def chordal_sq(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """|a - x|^2 evaluated as a sum of squares to keep precision near a."""
    d = np.asarray(x) - np.asarray(a)
    return np.sum(d * d, axis=-1)


def geodesic_distance(a: SpherePoint | np.ndarray, x: SpherePoint | np.ndarray) -> float:
    a = a.coords if isinstance(a, SpherePoint) else np.asarray(a)
    x = x.coords if isinstance(x, SpherePoint) else np.asarray(x)
    c = math.sqrt(float(chordal_sq(a, x)))
    return 2.0 * math.asin(min(1.0, c / 2.0))


def tangent_frame(a: np.ndarray, lead: Sequence[np.ndarray] = ()) -> np.ndarray:
    """Orthonormal frame of the tangent space at a, as rows of an (n, n+1) array.

    Vectors in ``lead`` are projected and used first (Gram-Schmidt), then the
    coordinate axes fill the remaining slots in order.
    """
    a = np.asarray(a, dtype=float)
    d = a.shape[0]
    rows: list[np.ndarray] = []
    cands = list(lead) + [np.eye(d)[k] for k in range(d)]
    for v in cands:
        w = np.asarray(v, dtype=float) - np.dot(v, a) * a
        for r in rows:
            w = w - np.dot(w, r) * r
        nw = np.linalg.norm(w)
        if nw > 1e-6:
            w = w / nw
            # second pass for orthogonality to round-off
            w = w - np.dot(w, a) * a
            for r in rows:
                w = w - np.dot(w, r) * r
            rows.append(w / np.linalg.norm(w))
        if len(rows) == d - 1:
            break
    return np.array(rows)


@dataclass(frozen=True)
class Chart:
    """Stereographic chart from the antipode of ``center``.

    ``stereo_project`` returns y with |y| = tan(theta/2).  The conformally flat
    coordinate used for bubbles is z = 2y, in which g_a = |dz|^2 and the
    conformal factor u_a = (1 + |z|^2/4)^{(n-2)/2} equals 1 at the center.
    """

    center: SpherePoint
    frame: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.frame is None:
            object.__setattr__(self, "frame", tangent_frame(self.center.coords))

    @property
    def n(self) -> int:
        return self.center.n


def stereo_project(c: Chart, x: SpherePoint | np.ndarray) -> np.ndarray:
    xc = x.coords if isinstance(x, SpherePoint) else np.asarray(x, dtype=float)
    a = c.center.coords
    if chordal_sq(-a, xc) < 1e-16:
        raise AntipodeSingularityError("point too close to the antipode of the chart center")
    return (c.frame @ xc) / (1.0 + float(np.dot(a, xc)))


def stereo_lift(c: Chart, y: np.ndarray) -> SpherePoint:
    y = np.asarray(y, dtype=float)
    s = float(np.dot(y, y))
    x = ((1.0 - s) * c.center.coords + 2.0 * (y @ c.frame)) / (1.0 + s)
    return SpherePoint(x)


def conformal_factor(c: Chart, x: SpherePoint) -> float:
    """u_a(x) with u_a(a) = 1, so that g_a = u_a^{4/(n-2)} g_0 is flat in z = 2y."""
    y = stereo_project(c, x)
    z2 = 4.0 * float(np.dot(y, y))
    return (1.0 + z2 / 4.0) ** ((c.n - 2) / 2)


def exp_map(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Exponential map at a of an ambient tangent vector v."""
    t = float(np.linalg.norm(v))
    if t == 0.0:
        return np.array(a, dtype=float)
    x = math.cos(t) * np.asarray(a) + math.sin(t) * (np.asarray(v) / t)
    return x / np.linalg.norm(x)


def green_g0(a: SpherePoint, x: SpherePoint) -> float:
    """Green function of L_{g0} on S^n.

    Equal to u_a(a) u_a(x) r_a^{2-n} / (4n(n-1) omega_n) in the flat chart at a;
    on the sphere this collapses to |a - x|^{2-n} / (4n(n-1) omega_n) with
    omega_n the unit ball volume.
    """
    n = a.n
    d2 = float(chordal_sq(a.coords, x.coords))
    if d2 < 1e-28:
        raise CoincidentPointsError("Green function evaluated on the diagonal")
    return d2 ** ((2 - n) / 2) / (4 * n * (n - 1) * unit_ball_volume(n))


def gamma_n(n: int) -> float:
    return (4 * n * (n - 1) * unit_ball_volume(n)) ** (2 / (2 - n))


# ---------------------------------------------------------------------------
# Polynomial K fields


Monomial = tuple[int, ...]


def _quad_terms(n: int, kappa0: float, beta: Sequence[float]) -> dict[Monomial, float]:
    terms: dict[Monomial, float] = {}
    if kappa0:
        terms[(0,) * (n + 1)] = float(kappa0)
    for k, b in enumerate(beta):
        if b:
            e = [0] * (n + 1)
            e[k] = 2
            terms[tuple(e)] = float(b)
    return terms


@dataclass(frozen=True)
class KField:
    """A polynomial in the ambient coordinates restricted to S^n (degree <= 4)."""

    n: int
    kind: str
    terms: tuple[tuple[Monomial, float], ...]
    kappa0: float = 0.0
    beta: tuple[float, ...] = ()

    @classmethod
    def quadratic(cls, kappa0: float, beta: Sequence[float]) -> "KField":
        n = len(beta) - 1
        t = _quad_terms(n, kappa0, beta)
        return cls(n, "ambient-quadratic", tuple(sorted(t.items())), float(kappa0),
                   tuple(float(b) for b in beta))

    @classmethod
    def constant(cls, n: int, value: float = 1.0) -> "KField":
        return cls.quadratic(value, [0.0] * (n + 1))

    @classmethod
    def polynomial(cls, n: int, kappa0: float, monomials: dict[Monomial, float]) -> "KField":
        t: dict[Monomial, float] = {}
        if kappa0:
            t[(0,) * (n + 1)] = float(kappa0)
        for e, c in monomials.items():
            e = tuple(int(v) for v in e)
            if len(e) != n + 1 or sum(e) > 4 or min(e) < 0:
                raise ValueError(f"invalid monomial exponent {e}")
            t[e] = t.get(e, 0.0) + float(c)
        return cls(n, "ambient-polynomial", tuple(sorted(t.items())), float(kappa0))

    @property
    def degree(self) -> int:
        return max((sum(e) for e, c in self.terms if c), default=0)

    def to_json(self) -> dict:
        if self.kind == "ambient-quadratic":
            return {"kind": self.kind, "kappa0": self.kappa0, "beta": list(self.beta)}
        mons = [{"exponent": list(e), "coef": c} for e, c in self.terms if sum(e) > 0]
        return {"kind": self.kind, "kappa0": self.kappa0, "n": self.n, "monomials": mons}

    @classmethod
    def from_json(cls, d: dict, n: int | None = None) -> "KField":
        kind = d.get("kind")
        if kind == "ambient-quadratic":
            beta = d["beta"]
            if n is not None and len(beta) != n + 1:
                raise ValueError("beta must have n+1 entries")
            return cls.quadratic(float(d.get("kappa0", 0.0)), beta)
        if kind == "ambient-polynomial":
            nn = int(d.get("n", n if n is not None else -1))
            mons = {tuple(m["exponent"]): m["coef"] for m in d.get("monomials", [])}
            return cls.polynomial(nn, float(d.get("kappa0", 0.0)), mons)
        raise ValueError(f"unknown K kind {kind!r}")

    # ambient evaluation -------------------------------------------------

    def values(self, X: np.ndarray) -> np.ndarray:
        """K at an (N, n+1) array of ambient points."""
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for e, c in self.terms:
            t = np.full(X.shape[0], c)
            for k, p in enumerate(e):
                if p:
                    t = t * X[:, k] ** p
            out += t
        return out

    def _derivs(self, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
        """Ambient value, gradient, Hessian and third derivative tensor at x."""
        d = self.n + 1
        F = 0.0
        g = np.zeros(d)
        H = np.zeros((d, d))
        T = np.zeros((d, d, d))
        for e, c in self.terms:
            e = np.array(e)

            def mono(ex: np.ndarray) -> float:
                if np.any(ex < 0):
                    return 0.0
                return float(np.prod(x ** ex))

            F += c * mono(e)
            for i in range(d):
                if e[i] == 0:
                    continue
                ei = e.copy()
                ei[i] -= 1
                ci = c * e[i]
                g[i] += ci * mono(ei)
                for j in range(d):
                    if ei[j] == 0:
                        continue
                    ej = ei.copy()
                    ej[j] -= 1
                    cj = ci * ei[j]
                    H[i, j] += cj * mono(ej)
                    for k in range(d):
                        if ej[k] == 0:
                            continue
                        ek = ej.copy()
                        ek[k] -= 1
                        T[i, j, k] += cj * ej[k] * mono(ek)
        return F, g, H, T


@dataclass
class KSuite:
    K: float
    grad: np.ndarray      # frame components, length n
    hess: np.ndarray      # (n, n) in the frame
    laplacian: float
    grad_laplacian: np.ndarray
    frame: np.ndarray


def k_eval_suite(K: KField, x: SpherePoint | np.ndarray, frame: np.ndarray | None = None) -> KSuite:
    """Exact intrinsic derivatives of K on S^n at x.

    Uses the ambient identities on |x| = 1:
      grad K = P dF,  Hess K = P D^2F P - (x.dF) P,
      Lap K = tr D^2F - x.D^2F.x - n x.dF,
    and grad Lap K as the tangential gradient of the ambient polynomial
    G = tr D^2F - x.D^2F.x - n x.dF.
    """
    xc = x.coords if isinstance(x, SpherePoint) else np.asarray(x, dtype=float)
    n = K.n
    E = tangent_frame(xc) if frame is None else frame
    F, g, H, T = K._derivs(xc)
    radial = float(xc @ g)
    grad = E @ g
    hess = E @ H @ E.T - radial * np.eye(n)
    lap = float(np.trace(H) - xc @ H @ xc - n * radial)
    # gradient of G(x) = tr H(x) - x.H(x).x - n x.g(x)
    dtr = np.einsum("iik->k", T)
    dquad = 2 * H @ xc + np.einsum("ijk,i,j->k", T, xc, xc)
    drad = g + H @ xc
    dG = dtr - dquad - n * drad
    return KSuite(F, grad, hess, lap, E @ dG, E)


@dataclass
class CriticalPoint:
    location: SpherePoint
    morse_index: int
    laplacian: float
    hessian_eigenvalues: np.ndarray
    grad_laplacian: np.ndarray
    value: float
    frame: np.ndarray

    def to_json(self) -> dict:
        return {
            "location": self.location.coords.tolist(),
            "morse_index": self.morse_index,
            "laplacian": self.laplacian,
            "value": self.value,
            "hessian_eigenvalues": self.hessian_eigenvalues.tolist(),
        }


def critical_point_at(K: KField, x: SpherePoint, grad_tol: float = 1e-12) -> CriticalPoint:
    s = k_eval_suite(K, x)
    if np.linalg.norm(s.grad) > grad_tol * max(1.0, abs(s.K)):
        raise ValueError("point is not a critical point of K")
    ev = np.linalg.eigvalsh(0.5 * (s.hess + s.hess.T))
    if np.min(np.abs(ev)) < 1e-10 or abs(s.laplacian) < 1e-10:
        raise DegenerateCriticalPointError(f"degenerate critical point at {x.coords}")
    return CriticalPoint(x, int(np.sum(ev < 0)), s.laplacian, ev, s.grad_laplacian, s.K, s.frame)


def _newton_critical(K: KField, x0: np.ndarray, iters: int = 60) -> np.ndarray | None:
    x = x0 / np.linalg.norm(x0)
    for _ in range(iters):
        s = k_eval_suite(K, x)
        gn = np.linalg.norm(s.grad)
        if gn < 1e-14:
            return x
        try:
            step = -np.linalg.solve(s.hess, s.grad)
        except np.linalg.LinAlgError:
            return None
        nrm = np.linalg.norm(step)
        if nrm > 0.5:
            step *= 0.5 / nrm
        x = exp_map(x, step @ s.frame)
    s = k_eval_suite(K, x)
    return x if np.linalg.norm(s.grad) < 1e-12 else None


def find_critical_points(K: KField, seeds: int = 400, seed: int = 12345) -> list[CriticalPoint]:
    """Newton iteration on grad K from a seed set; returns deduplicated critical points."""
    n = K.n
    d = n + 1
    pts: list[np.ndarray] = []
    for k in range(d):
        for sgn in (1.0, -1.0):
            e = np.zeros(d)
            e[k] = sgn
            pts.append(e)
    for i, j in itertools.combinations(range(d), 2):
        for si, sj in itertools.product((1.0, -1.0), repeat=2):
            e = np.zeros(d)
            e[i], e[j] = si, sj
            pts.append(e / math.sqrt(2))
    rng = np.random.default_rng(seed)
    for v in rng.standard_normal((seeds, d)):
        pts.append(v / np.linalg.norm(v))

    found: list[np.ndarray] = []
    for p in pts:
        x = _newton_critical(K, p)
        if x is None:
            continue
        if any(geodesic_distance(x, y) < 1e-6 for y in found):
            continue
        found.append(x)
    if not found:
        raise DegenerateCriticalPointError("no critical points located")
    out = [critical_point_at(K, SpherePoint(x)) for x in found]
    out.sort(key=lambda c: (-c.value, tuple(-c.location.coords)))
    return out
