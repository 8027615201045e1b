"""Dimensional constants built from radial moments over R^n.

Every constant is a signed combination of

    M(m, p)  = int_{R^n} r^{2m} (1 + r^2)^{-p} dx
    Lg(m, p) = int_{R^n} r^{2m} (1 + r^2)^{-p} log(1 + r^2) dx

and is evaluated twice: once from Gamma/digamma closed forms and once by
adaptive quadrature of the literal integrand.  The two values are kept
side by side in the table.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields
from typing import Callable

from scipy import integrate, special


class DivergentIntegralError(ValueError):
    pass


class ToleranceNotReachedError(RuntimeError):
    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class RadialMoment:
    n: int
    m: float
    p: float
    log_factor: bool = False

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if 2 * self.p - 2 * self.m - self.n <= 0:
            raise DivergentIntegralError(
                f"moment (n={self.n}, m={self.m}, p={self.p}) diverges"
            )


def sphere_area(k: int) -> float:
    """Surface area of the unit k-sphere in R^{k+1}."""
    return 2.0 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def _log_moment_closed(n: int, m: float, p: float) -> float:
    s = m + n / 2
    return (
        0.5 * n * math.log(math.pi)
        + math.lgamma(s)
        + math.lgamma(p - s)
        - math.lgamma(n / 2)
        - math.lgamma(p)
    )


def radial_moment_closed(mom: RadialMoment) -> float:
    """Closed form of the moment; log moments use the digamma derivative in p."""
    base = math.exp(_log_moment_closed(mom.n, mom.m, mom.p))
    if not mom.log_factor:
        return base
    s = mom.m + mom.n / 2
    return base * float(special.digamma(mom.p) - special.digamma(mom.p - s))


def _tan_integral(n: int, g: Callable[[float], float], tol: float) -> float:
    # r = tan(s); r^{n-1} dr = sin^{n-1} s cos^{-n-1} s ds
    def h(s: float) -> float:
        c = math.cos(s)
        if c <= 0.0:
            return 0.0
        r = math.tan(s)
        return g(r) * math.sin(s) ** (n - 1) / c ** (n + 1)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(h, 0.0, math.pi / 2, epsabs=0.0, epsrel=tol, limit=400)
        except integrate.IntegrationWarning as exc:
            raise ToleranceNotReachedError(str(exc), float("nan")) from exc
    if err > max(tol * abs(val), 1e-300):
        raise ToleranceNotReachedError(f"error estimate {err:.3e} above tolerance", err)
    return sphere_area(n - 1) * val


def radial_integral(n: int, g: Callable[[float], float], tol: float = 1e-12) -> float:
    """int_{R^n} g(|x|) dx by adaptive quadrature after r = tan(s)."""
    return _tan_integral(n, g, tol)


def radial_moment_quadrature(mom: RadialMoment, tol: float = 1e-12) -> float:
    n, m, p = mom.n, mom.m, mom.p
    if mom.log_factor:
        def g(r: float) -> float:
            t = 1.0 + r * r
            return r ** (2 * m) * t ** (-p) * math.log1p(r * r)
    else:
        def g(r: float) -> float:
            return r ** (2 * m) * (1.0 + r * r) ** (-p)
    return _tan_integral(n, g, tol)


def beta_symmetry_residual(n: int, m: float, p: float) -> float:
    """Relative gap between M(m, p) and its r -> 1/r image.

    Under r -> 1/r the moment M(m, p) becomes M(p - m - n, p), so the two
    must coincide whenever both converge.
    """
    a = radial_moment_closed(RadialMoment(n, m, p))
    b = radial_moment_closed(RadialMoment(n, p - m - n, p))
    return abs(a - b) / abs(a)


# Field names in table order.
PAPER_FIELDS = (
    "b1", "b2", "b3", "c1", "c2", "c3", "cbar0", "cbar1", "cbar2",
    "ctilde1", "ctilde2", "btilde1", "btilde2", "dtilde1", "ccheck3", "ccheck4",
    "dbar1", "bbar1", "chat3", "grave_b1", "grave_c2", "grave_d1", "grave_c0",
    "hess_lambda_coeff",
)
DERIVED_FIELDS = (
    "cbar1_eff", "ctilde1_eff", "ctilde2_eff", "btilde2_eff", "ccheck3_eff",
    "ccheck4_eff", "bcheck3_eff", "hess_alpha_eff", "hess_lambda_eff", "hess_center_eff",
)


@dataclass(frozen=True)
class ConstantsTable:
    n: int
    b1: float
    b2: float
    b3: float
    c1: float
    c2: float
    c3: float
    cbar0: float
    cbar1: float
    cbar2: float
    ctilde1: float
    ctilde2: float
    btilde1: float
    btilde2: float
    dtilde1: float
    ccheck3: float
    ccheck4: float
    dbar1: float
    bbar1: float
    chat3: float
    grave_b1: float
    grave_c2: float
    grave_d1: float
    grave_c0: float
    hess_lambda_coeff: float
    # coefficients re-derived from the single and multi bubble expansions;
    # these are what the expansion formulas consume
    cbar1_eff: float
    ctilde1_eff: float
    ctilde2_eff: float
    btilde2_eff: float
    ccheck3_eff: float
    ccheck4_eff: float
    bcheck3_eff: float
    hess_alpha_eff: float
    hess_lambda_eff: float
    hess_center_eff: float
    quadrature: dict = field(default_factory=dict, compare=False)
    provenance: dict = field(default_factory=dict, compare=False)

    def values(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if f.name not in ("n", "quadrature", "provenance")}

    @property
    def beta0(self) -> float:
        return (self.n - 2) / self.n


def _assemble(n: int, M: Callable[[float, float], float], Lg: Callable[[float, float], float],
              Q: Callable[[Callable[[float], float]], float], beta_fn: Callable[[], float],
              literal: bool) -> dict[str, float]:
    """Evaluate all fields.

    With literal=False the combinations are expanded into moments M/Lg;
    with literal=True each integral is integrated as written via Q.
    """
    fs = math.fsum
    h = n / 2
    if literal:
        b1 = Q(lambda r: (1 + r * r) ** (-(n + 2) / 2))
        c1 = Q(lambda r: (1 + r * r) ** (-n))
        c2i = Q(lambda r: (r * r - 1) ** 2 * (1 + r * r) ** (-(n + 2)))
        c3i = Q(lambda r: r * r * (1 + r * r) ** (-(n + 2)))
        cbar0 = c1
        logi = Q(lambda r: math.log1p(r * r) * (1 + r * r) ** (-n))
        cbar2i = Q(lambda r: r * r * (1 + r * r) ** (-n))
        ct1i = Q(lambda r: (1 - r * r) * (1 + r * r) ** (-(n + 1)) * -math.log1p(r * r))
        ct2i = Q(lambda r: r * r * (1 - r * r) * (1 + r * r) ** (-(n + 1)))
        dt1i = Q(lambda r: r ** n * (n + 2 - n * r * r) * (1 + r * r) ** (-(n + 2)))
        dbar1 = Q(lambda r: r ** n * (1 + r * r) ** (-(n + 1)))
        ch3i = Q(lambda r: r * r * (1 - r * r) * (1 + r * r) ** (-(n + 2)))
    else:
        b1 = M(0, (n + 2) / 2)
        c1 = M(0, n)
        c2i = fs([M(2, n + 2), -2 * M(1, n + 2), M(0, n + 2)])
        c3i = M(1, n + 2)
        cbar0 = M(0, n)
        logi = Lg(0, n)
        cbar2i = M(1, n)
        ct1i = fs([Lg(1, n + 1), -Lg(0, n + 1)])
        ct2i = fs([M(1, n + 1), -M(2, n + 1)])
        dt1i = fs([(n + 2) * M(h, n + 2), -n * M(h + 1, n + 2)])
        dbar1 = M(h, n + 1)
        ch3i = fs([M(1, n + 2), -M(2, n + 2)])

    beta = (n - 2) / n
    cb = cbar0 ** beta
    cbar2 = cbar2i / (2 * n)
    ctilde1 = n * (n - 1) * (n - 2) ** 2 / cb * ct1i
    ctilde2 = -(n - 1) * (n - 2) / cb * ct2i
    btilde2 = 4 * n * (n - 1) / cb * b1
    ccheck3 = 4 * (n - 1) * (n - 2) * cbar0
    ccheck4 = 2 * (n - 1) * cbar2i
    out = {
        "b1": b1, "b2": b1, "b3": b1,
        "c1": c1,
        "c2": (n - 2) ** 2 / 4 * c2i,
        "c3": (n - 2) ** 2 / n * c3i,
        "cbar0": cbar0,
        "cbar1": 2 / (n - 2) * logi,
        "cbar2": cbar2,
        "ctilde1": ctilde1,
        "ctilde2": ctilde2,
        "btilde1": 4 * n * (n - 1) * b1,
        "btilde2": btilde2,
        "dtilde1": 4 * n * (n - 1) / cb * dt1i,
        "ccheck3": ccheck3,
        "ccheck4": ccheck4,
        "dbar1": dbar1,
        "bbar1": 2 * n / (n - 2) * b1,
        "chat3": -ch3i,
        "grave_b1": 8 * n * (n - 1) * (n + 2) / (cb * (n - 2)) * b1,
        "grave_c2": 8 * n * (n - 1) / cb * cbar2,
        "grave_d1": 8 * n * (n - 1) / cb * dbar1,
        "grave_c0": 8 * n * (n - 1) * cbar0 ** (2 / n),
        "hess_lambda_coeff": beta_fn(),
        "cbar1_eff": (n - 2) / 2 * logi,
        "ctilde1_eff": 2 * ctilde1,
        "ctilde2_eff": 2 * ctilde2,
        "btilde2_eff": 2 * btilde2,
        "ccheck3_eff": ccheck3 / cb,
        "ccheck4_eff": (n - 2) / n * ccheck4 / cb,
        "bcheck3_eff": 2 * btilde2,
        "hess_alpha_eff": 32 * n * (n - 1) * cbar0 ** (2 / n) / (n - 2),
        "hess_lambda_eff": (n - 2) ** 2 * cbar0 / (2 * n),
        "hess_center_eff": (n - 2) * cbar0 / (2 * n),
    }
    return out


def hess_lambda_closed(n: int) -> float:
    return (n - 2) ** 2 * math.exp(2 * math.lgamma(n / 2) - math.lgamma(n + 1)) / (128 * n)


def _hess_lambda_quadrature(n: int, tol: float) -> float:
    # Gamma(n/2)^2 / Gamma(n+1) = B(n/2, n/2) / n
    a = n / 2
    val, err = integrate.quad(lambda t: t ** (a - 1) * (1 - t) ** (a - 1), 0.0, 1.0,
                              epsabs=0.0, epsrel=tol, limit=200)
    if err > tol * abs(val):
        raise ToleranceNotReachedError("Beta quadrature did not converge", err)
    return (n - 2) ** 2 * val / (128 * n * n)


def build_table(n: int, tol: float = 1e-12) -> ConstantsTable:
    if n < 5:
        raise ValueError("dimension n >= 5 required")

    def M(m: float, p: float) -> float:
        return radial_moment_closed(RadialMoment(n, m, p))

    def Lg(m: float, p: float) -> float:
        return radial_moment_closed(RadialMoment(n, m, p, True))

    def Q(g: Callable[[float], float]) -> float:
        return radial_integral(n, g, tol)

    closed = _assemble(n, M, Lg, Q, lambda: hess_lambda_closed(n), literal=False)
    quad = _assemble(n, M, Lg, Q, lambda: _hess_lambda_quadrature(n, tol), literal=True)
    prov = {k: "gamma" for k in closed}
    for k in ("cbar1", "cbar1_eff", "ctilde1", "ctilde1_eff"):
        prov[k] = "digamma"
    return ConstantsTable(n=n, **closed, quadrature=quad, provenance=prov)


@dataclass
class IdentityCheck:
    name: str
    lhs: float
    rhs: float
    residual: float
    passed: bool
    required: bool = True

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "residual": self.residual, "pass": self.passed, "required": self.required}


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


def lambda_hessian_combination(t: ConstantsTable) -> float:
    n = t.n
    return (t.c2 * (1 + (n - 2) / (16 * n * n) * t.ctilde1 * t.cbar2 / (t.ctilde2 * t.c2))
            - (n - 2) ** 2 / 2 * t.chat3)


def verify_identities(t: ConstantsTable, tol: float = 1e-10) -> list[IdentityCheck]:
    n = t.n
    out = []
    pairs = [
        ("cbar0 = c1", t.cbar0, t.c1),
        ("c2 = c3", t.c2, t.c3),
        ("b1 = b2 = b3", t.b1, max(t.b2, t.b3, key=lambda v: abs(v - t.b1))),
        ("btilde1 = 4n(n-1) b1", t.btilde1, 4 * n * (n - 1) * t.b1),
    ]
    for name, lhs, rhs in pairs:
        r = _rel(lhs, rhs)
        out.append(IdentityCheck(name, lhs, rhs, r, r <= tol))
    lhs = lambda_hessian_combination(t)
    r = _rel(lhs, t.hess_lambda_coeff)
    out.append(IdentityCheck("lambda-lambda combination = hess_lambda_coeff",
                             lhs, t.hess_lambda_coeff, r, r <= tol, required=False))
    return out


def dual_provenance_residuals(t: ConstantsTable) -> dict[str, float]:
    return {k: _rel(v, t.quadrature[k]) for k, v in t.values().items()}
