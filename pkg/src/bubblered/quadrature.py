"""Multi-patch quadrature on S^n adapted to concentrated bubble sums.

Each bubble owns a polar patch around its center: geometric radial shells
inside ``patch_radius / lam`` and uniform far-field panels out to the
antipode.  Patches cover the whole sphere and are blended with the smooth
partition of unity

    w_i(x) = |x - a_i|^{-2P} / sum_k |x - a_k|^{-2P}.

Angles use a hyperspherical product rule (Gauss-Jacobi in cos psi_k,
trapezoid in the last angle) in a tangent frame whose leading vectors point
at the other centers, so only the leading q - 1 angles need a dense rule.

Every chunk (one radial panel of one patch) is reduced on its own and the
chunk partials are combined in a fixed order with ``math.fsum``, which makes
results independent of the number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .bubbles import Configuration
from .constants import ToleranceNotReachedError
from .geometry import geodesic_distance, tangent_frame


@dataclass(frozen=True)
class QuadratureSpec:
    patch_radius: float = 50.0     # in units of 1/lam
    patch_order: int = 20          # Gauss points per panel and per dense angle
    shells: int = 8                # geometric shells inside the patch radius
    far_order: int = 16            # Gauss points per far-field panel
    far_width: float = 0.25        # far-field panel width (radians)
    angular_degree: int = 8        # exact polynomial degree of the sparse angles
    dense_ramp: float = 0.5        # dense angles reach full order at this fraction of the
                                   # distance to the nearest other center
    pou_power: float = 0.0         # 0 selects n + 2
    tol: float = 1e-8
    threads: int = 1

    def __post_init__(self) -> None:
        if self.patch_radius <= 0 or self.patch_order < 2 or self.shells < 1:
            raise ValueError("invalid quadrature spec")
        if self.far_order < 2 or not 0 < self.far_width <= math.pi:
            raise ValueError("invalid far-field settings")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")

    def coarsened(self) -> "QuadratureSpec":
        """Companion rule used for the a-posteriori error estimate."""
        return replace(self, patch_order=max(4, (3 * self.patch_order) // 4),
                       far_order=max(4, (3 * self.far_order) // 4),
                       shells=max(1, self.shells - 1),
                       angular_degree=max(2, self.angular_degree - 2))

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("threads")
        return d

    @classmethod
    def from_json(cls, d: dict | None) -> "QuadratureSpec":
        d = dict(d or {})
        known = set(cls.__dataclass_fields__) - {"threads"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown quadrature keys: {sorted(extra)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# one-dimensional rules


@lru_cache(maxsize=None)
def _gauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(order)
    return x, w


@lru_cache(maxsize=None)
def _jacobi(order: int, a: float) -> tuple[np.ndarray, np.ndarray]:
    if a == 0.0:
        return _gauss(order)
    x, w = roots_jacobi(order, a, a)
    return x, w


def _points_for_degree(deg: int) -> int:
    return max(1, (deg + 2) // 2)


@lru_cache(maxsize=None)
def sphere_rule(n: int, dense: int, dense_order: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on S^{n-1} (points in R^n).

    The first ``dense`` angles get ``dense_order`` points, the rest are exact
    for polynomials of total degree ``degree``.
    """
    nang = n - 2
    sparse = _points_for_degree(degree)
    pts = [np.ones(1)]          # running product of sines
    comps: list[np.ndarray] = []
    w = np.ones(1)
    for k in range(1, nang + 1):
        order = dense_order if k <= dense else sparse
        t, wt = _jacobi(order, 0.5 * (n - 2 - k))
        s = np.sqrt(1.0 - t * t)
        prev = pts[0]
        comps = [np.kron(c, np.ones(order)) for c in comps]
        comps.append(np.kron(prev, t))
        pts[0] = np.kron(prev, s)
        w = np.kron(w, wt)
    nphi = 2 * dense_order if dense > nang else degree + 1
    phi = 2.0 * math.pi * np.arange(nphi) / nphi
    comps = [np.kron(c, np.ones(nphi)) for c in comps]
    comps.append(np.kron(pts[0], np.cos(phi)))
    comps.append(np.kron(pts[0], np.sin(phi)))
    w = np.kron(w, np.full(nphi, 2.0 * math.pi / nphi))
    return np.stack(comps, axis=1), w


def radial_panels(lam: float, spec: QuadratureSpec) -> list[tuple[float, float, int]]:
    rho = min(spec.patch_radius / lam, 0.5 * math.pi)
    edges = [0.0] + [rho * 2.0 ** (k - spec.shells + 1) for k in range(spec.shells)]
    panels = [(edges[k], edges[k + 1], spec.patch_order) for k in range(spec.shells)]
    nfar = max(1, math.ceil((math.pi - rho) / spec.far_width))
    fe = np.linspace(rho, math.pi, nfar + 1)
    panels += [(float(fe[k]), float(fe[k + 1]), spec.far_order) for k in range(nfar)]
    return panels


# ---------------------------------------------------------------------------
# patches


@dataclass
class Patch:
    center: np.ndarray
    frame: np.ndarray
    panels: list[tuple[float, float, int]]
    dense: int
    d_near: float

    def dense_order(self, hi: float, spec: QuadratureSpec) -> int:
        if not self.dense:
            return 1
        full = spec.patch_order
        reach = spec.dense_ramp * self.d_near
        if hi >= reach:
            return full
        return max(min(6, full), math.ceil(full * hi / reach))


def build_patches(cfg: Configuration, spec: QuadratureSpec) -> list[Patch]:
    q = cfg.q
    out = []
    for i in range(q):
        a = cfg.centers[i]
        others = [j for j in range(q) if j != i]
        lead = [cfg.centers[j] for j in others]
        d_near = min((geodesic_distance(a, cfg.centers[j]) for j in others), default=math.pi)
        out.append(Patch(a, tangent_frame(a, lead), radial_panels(float(cfg.lams[i]), spec),
                         q - 1, d_near))
    return out


def pou_weights(X: np.ndarray, centers: np.ndarray, i: int, power: float) -> np.ndarray:
    if len(centers) == 1:
        return np.ones(X.shape[0])
    D = 2.0 - 2.0 * (X @ centers.T)
    D = np.maximum(D, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (D[:, i:i + 1] / D) ** power
    ratio[:, i] = 1.0
    s = np.sum(np.where(np.isnan(ratio), np.inf, ratio), axis=1)
    return 1.0 / s


def chunk_nodes(patch: Patch, panel: tuple[float, float, int], centers: np.ndarray, i: int,
                spec: QuadratureSpec, degree: int) -> tuple[np.ndarray, np.ndarray]:
    n = patch.frame.shape[0]
    lo, hi, order = panel
    x, wx = _gauss(order)
    th = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    wt = 0.5 * (hi - lo) * wx * np.sin(th) ** (n - 1)
    dense = patch.dense
    Om, wo = sphere_rule(n, dense, patch.dense_order(hi, spec), degree)
    dirs = Om @ patch.frame                              # (Na, n+1)
    X = (np.cos(th)[:, None, None] * patch.center[None, None, :]
         + np.sin(th)[:, None, None] * dirs[None, :, :]).reshape(-1, n + 1)
    W = np.outer(wt, wo).reshape(-1)
    P = spec.pou_power or (n + 2)
    W = W * pou_weights(X, centers, i, P)
    return X, W


def iter_chunks(cfg: Configuration, spec: QuadratureSpec, degree: int):
    """Yield zero-argument callables producing (X, W) in the canonical order."""
    patches = build_patches(cfg, spec)
    for i, pt in enumerate(patches):
        for panel in pt.panels:
            yield (lambda pt=pt, panel=panel, i=i:
                   chunk_nodes(pt, panel, cfg.centers, i, spec, degree))


def _fsum_stack(parts: Sequence[np.ndarray]) -> np.ndarray:
    st = np.stack([np.asarray(p, dtype=float) for p in parts])
    flat = st.reshape(st.shape[0], -1)
    res = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return res.reshape(st.shape[1:])


def map_reduce(cfg: Configuration, spec: QuadratureSpec, degree: int,
               work: Callable[[np.ndarray, np.ndarray], dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    """Apply ``work`` to every chunk and combine results deterministically."""
    makers = list(iter_chunks(cfg, spec, degree))

    def run(mk):
        X, W = mk()
        return work(X, W)

    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as ex:
            results = list(ex.map(run, makers))
    else:
        results = [run(mk) for mk in makers]
    keys = results[0].keys()
    return {k: _fsum_stack([r[k] for r in results]) for k in keys}


# ---------------------------------------------------------------------------
# generic integration


@dataclass
class IntegralResult:
    value: np.ndarray | float
    error: float
    scale: float


def integrate_with_error(f: Callable[[np.ndarray], np.ndarray], cfg: Configuration,
                         spec: QuadratureSpec | None = None) -> IntegralResult:
    spec = spec or QuadratureSpec()

    def work(X, W):
        v = np.asarray(f(X), dtype=float)
        if v.ndim == 1:
            return {"v": W @ v, "a": np.array([W @ np.abs(v)])}
        return {"v": W @ v, "a": np.array([np.sum(W @ np.abs(v))])}

    fine = map_reduce(cfg, spec, spec.angular_degree, work)
    coarse = map_reduce(cfg, spec.coarsened(), spec.coarsened().angular_degree, work)
    val = fine["v"]
    err = float(np.max(np.abs(val - coarse["v"])))
    out = float(val) if val.ndim == 0 else val
    return IntegralResult(out, err, float(fine["a"][0]))


def integrate(f: Callable[[np.ndarray], np.ndarray], cfg: Configuration,
              spec: QuadratureSpec | None = None) -> float | np.ndarray:
    """Integral of ``f`` over S^n with nodes adapted to ``cfg``."""
    spec = spec or QuadratureSpec()
    res = integrate_with_error(f, cfg, spec)
    if res.error > spec.tol * max(res.scale, 1e-300):
        raise ToleranceNotReachedError(
            f"quadrature error estimate {res.error:.3e} exceeds tolerance", res.error)
    return res.value


def ball_rule(center: np.ndarray, frame: np.ndarray, radius: float, lam: float,
              spec: QuadratureSpec, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on the geodesic ball B_radius(center), graded at scale 1/lam."""
    n = frame.shape[0]
    inner = min(spec.patch_radius / lam, radius)
    edges = [0.0] + [inner * 2.0 ** (k - spec.shells + 1) for k in range(spec.shells)]
    panels = [(edges[k], edges[k + 1], spec.patch_order) for k in range(spec.shells)]
    if radius > inner:
        nfar = max(1, math.ceil((radius - inner) / spec.far_width))
        fe = np.linspace(inner, radius, nfar + 1)
        panels += [(float(fe[k]), float(fe[k + 1]), spec.far_order) for k in range(nfar)]
    Om, wo = sphere_rule(n, 0, 1, degree)
    dirs = Om @ frame
    Xs, Ws = [], []
    for lo, hi, order in panels:
        x, wx = _gauss(order)
        th = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        wt = 0.5 * (hi - lo) * wx * np.sin(th) ** (n - 1)
        Xs.append((np.cos(th)[:, None, None] * center[None, None, :]
                   + np.sin(th)[:, None, None] * dirs[None, :, :]).reshape(-1, n + 1))
        Ws.append(np.outer(wt, wo).reshape(-1))
    return np.concatenate(Xs), np.concatenate(Ws)
