"""Run configuration files: schema check, target selection and hashing."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .bubbles import Configuration
from .geometry import CriticalPoint, KField, SpherePoint, critical_point_at, find_critical_points
from .quadrature import QuadratureSpec
from .solver import SolverOptions

SCHEMA_VERSION = 1

TOP_KEYS = {"schema_version", "n", "K", "tau", "tau_sweep", "targets", "normalization",
            "quadrature", "solver", "lambda_grid", "tolerances", "output", "configuration"}
SOLVER_KEYS = {"tol", "max_iter", "d_min", "max_lam_factor", "max_step_s", "max_backtracks"}
CONFIGURATION_KEYS = {"alpha", "centers", "lambdas"}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class RunConfig:
    raw: dict
    n: int
    K: KField
    quadrature: QuadratureSpec
    solver: SolverOptions
    tau: float | None = None
    tau_sweep: list[float] | None = None
    targets: list = field(default_factory=list)
    normalization: str = "k_tau"
    lambda_grid: list[float] | None = None
    tolerances: dict = field(default_factory=dict)
    output: str | None = None
    configuration: dict | None = None

    @property
    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode("utf-8")).hexdigest()

    def resolve_targets(self) -> list[CriticalPoint]:
        return [select_target(self.K, s) for s in self.targets]

    def explicit_configuration(self, tau: float) -> Configuration:
        c = self.configuration
        if c is None:
            raise ConfigError("no explicit configuration given")
        try:
            return Configuration(self.n, tau, c["alpha"], c["centers"], c["lambdas"],
                                 d_min=self.solver.d_min)
        except ValueError as e:
            raise ConfigError(str(e)) from e


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _unknown(d: dict, allowed: set, where: str) -> None:
    extra = set(d) - allowed
    _require(not extra, f"unknown keys in {where}: {sorted(extra)}")


def parse_run_config(raw: Any) -> RunConfig:
    _require(isinstance(raw, dict), "run configuration must be a JSON object")
    _unknown(raw, TOP_KEYS, "run configuration")
    _require(raw.get("schema_version") == SCHEMA_VERSION,
             f"schema_version must be {SCHEMA_VERSION}")
    n = raw.get("n")
    _require(isinstance(n, int) and not isinstance(n, bool) and n >= 5, "n must be an integer >= 5")
    _require("K" in raw, "missing K")
    try:
        K = KField.from_json(raw["K"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid K: {e}") from e
    _require(K.n == n, "K lives on a different sphere than n")
    try:
        quad = QuadratureSpec.from_json(raw.get("quadrature"))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid quadrature section: {e}") from e
    sol = dict(raw.get("solver") or {})
    _unknown(sol, SOLVER_KEYS, "solver")
    try:
        opts = SolverOptions(**sol)
    except TypeError as e:
        raise ConfigError(f"invalid solver section: {e}") from e
    tau = raw.get("tau")
    sweep = raw.get("tau_sweep")
    if tau is not None:
        _require(isinstance(tau, (int, float)) and tau > 0, "tau must be positive")
    if sweep is not None:
        _require(isinstance(sweep, list) and len(sweep) >= 1
                 and all(isinstance(t, (int, float)) and t > 0 for t in sweep),
                 "tau_sweep must be a list of positive numbers")
    targets = raw.get("targets", [])
    _require(isinstance(targets, list), "targets must be a list")
    for s in targets:
        _require(isinstance(s, str) or (isinstance(s, list) and len(s) == n + 1),
                 f"invalid target selector {s!r}")
    norm = raw.get("normalization", "k_tau")
    _require(norm in ("k_tau", "energy"), "normalization must be 'k_tau' or 'energy'")
    grid = raw.get("lambda_grid")
    if grid is not None:
        _require(isinstance(grid, list) and all(isinstance(v, (int, float)) and v >= 1 for v in grid),
                 "lambda_grid must be a list of numbers >= 1")
    tols = raw.get("tolerances", {})
    _require(isinstance(tols, dict), "tolerances must be an object")
    conf = raw.get("configuration")
    if conf is not None:
        _require(isinstance(conf, dict), "configuration must be an object")
        _unknown(conf, CONFIGURATION_KEYS, "configuration")
        _require(set(conf) == CONFIGURATION_KEYS, "configuration needs alpha, centers and lambdas")
    return RunConfig(raw=raw, n=n, K=K, quadrature=quad, solver=opts,
                     tau=float(tau) if tau is not None else None,
                     tau_sweep=[float(t) for t in sweep] if sweep is not None else None,
                     targets=targets, normalization=norm,
                     lambda_grid=[float(v) for v in grid] if grid is not None else None,
                     tolerances=tols, output=raw.get("output"), configuration=conf)


def load_run_config(path: str) -> RunConfig:
    """Read and validate a run configuration (OSError propagates for I/O failures)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON: {e}") from e
    return parse_run_config(raw)


def select_target(K: KField, selector) -> CriticalPoint:
    """'max', 'index:k' (k-th critical point by decreasing K) or explicit coordinates."""
    if isinstance(selector, list):
        x = np.asarray(selector, dtype=float)
        x = x / np.linalg.norm(x)
        try:
            return critical_point_at(K, SpherePoint(x), grad_tol=1e-8)
        except ValueError as e:
            raise ConfigError(f"target {selector}: {e}") from e
    cps = _critical_points(K)
    if selector == "max":
        return cps[0]
    if isinstance(selector, str) and selector.startswith("index:"):
        try:
            k = int(selector.split(":", 1)[1])
        except ValueError as e:
            raise ConfigError(f"bad selector {selector!r}") from e
        _require(0 <= k < len(cps), f"selector {selector!r} out of range ({len(cps)} critical points)")
        return cps[k]
    raise ConfigError(f"unknown target selector {selector!r}")


_CP_CACHE: dict[str, list[CriticalPoint]] = {}


def _critical_points(K: KField) -> list[CriticalPoint]:
    key = canonical_json(K.to_json())
    if key not in _CP_CACHE:
        _CP_CACHE[key] = find_critical_points(K)
    return _CP_CACHE[key]
