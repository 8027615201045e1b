"""Command-line entry point.

Exit codes: 0 success, 2 constants identity failure, 3 verification criteria
not met, 4 solver did not converge, 64 usage error, 65 bad configuration,
74 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, canonical_json, load_run_config
from .constants import build_table, dual_provenance_residuals, verify_identities
from .expansions import (LADDER_CASES, eps_derivative_report, hessian_block_report,
                         interaction_lemma_suite, ladder_K, run_ladder, table_for)
from .kernel import BACKEND
from .quadrature import QuadratureSpec

EXIT_OK = 0
EXIT_IDENTITY = 2
EXIT_CRITERIA = 3
EXIT_NO_CONVERGENCE = 4
EXIT_USAGE = 64
EXIT_DATAERR = 65
EXIT_IOERR = 74

VERIFY_CASES = sorted(list(LADDER_CASES) + ["interaction-eps-derivative", "interactions",
                                             "hessian-blocks"])

log = logging.getLogger("bubblered")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default
        raise UsageError(message)


# ---------------------------------------------------------------------------
# output helpers


class Output:
    def __init__(self, out_dir: str, run_hash: str, n: int | None, quiet: bool):
        self.dir = out_dir
        self.hash = run_hash
        self.n = n
        self.quiet = quiet

    def say(self, msg: str) -> None:
        if not self.quiet:
            print(msg)

    def _path(self, name: str) -> str:
        os.makedirs(self.dir, exist_ok=True)
        return os.path.join(self.dir, name)

    def stamp(self, obj: dict) -> dict:
        out = {"run_config_hash": self.hash, "bubblered_version": __version__}
        if self.n is not None:
            t = table_for(self.n)
            out["constants_provenance"] = {"n": self.n, "sources": t.provenance}
        out.update(obj)
        return out

    def json(self, name: str, obj: dict) -> str:
        path = self._path(name)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_plain(self.stamp(obj)), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    def csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence]) -> str:
        path = self._path(name)
        buf = io.StringIO()
        buf.write(f"# run_config_hash={self.hash}\n")
        if self.n is not None:
            prov = canonical_json(table_for(self.n).provenance)
            buf.write(f"# constants_provenance={hashlib.sha256(prov.encode()).hexdigest()}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
        return path


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def _args_hash(args: argparse.Namespace, skip: Sequence[str] = ("out", "threads", "quiet", "func")) -> str:
    d = {k: v for k, v in vars(args).items() if k not in skip}
    return hashlib.sha256(canonical_json(d).encode("utf-8")).hexdigest()


def _threads(args) -> int:
    return args.threads if args.threads else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# constants


def cmd_constants(args) -> int:
    if args.n < 5:
        raise UsageError("n must be at least 5")
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    t = build_table(args.n)
    checks = verify_identities(t, args.tol)
    out = Output(args.out, _args_hash(args), args.n, args.quiet)
    payload = {"n": args.n, "values": t.values(), "quadrature_values": t.quadrature}
    code = EXIT_OK
    if args.check:
        payload["identities"] = [c.as_dict() for c in checks]
        payload["dual_provenance_residuals"] = dual_provenance_residuals(t)
        for c in checks:
            status = "pass" if c.passed else ("FAIL" if c.required else "warn")
            out.say(f"{status:4s}  {c.name}  residual {c.residual:.3e}")
            if not c.passed and c.required:
                code = EXIT_IDENTITY
            elif not c.passed:
                print(f"warning: {c.name} does not hold (residual {c.residual:.3e})", file=sys.stderr)
    path = out.json(f"constants_n{args.n}.json", payload)
    out.say(f"cbar0 = {t.cbar0:.10f}")
    out.say(f"wrote {path}")
    return code


# ---------------------------------------------------------------------------
# verify


def _grid(s: str | None) -> list[float]:
    if not s:
        return [25.0, 50.0, 100.0, 200.0]
    try:
        vals = [float(v) for v in s.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"bad lambda grid {s!r}") from e
    if len(vals) < 4 or any(v < 1 for v in vals):
        raise UsageError("lambda grid needs at least 4 values >= 1")
    return vals


def _balanced_pair(n: int, lam: float):
    """Two antipodal maxima of the ladder K at the balance law for lam."""
    from .bubbles import Configuration
    from .expansions import tau_for
    K = ladder_K(n)
    e0 = np.eye(n + 1)[0]
    tau = tau_for("balance", lam, K, e0, n)
    a = float(K.values(e0[None, :])[0]) ** (-(n - 2) / 4)
    return Configuration(n, tau, [a, a], [e0, -e0], [lam, lam]), K


def cmd_verify(args) -> int:
    case = args.case
    if case not in VERIFY_CASES:
        raise UsageError(f"unknown case {case!r}; choose from {', '.join(VERIFY_CASES)}")
    if args.n < 5:
        raise UsageError("n must be at least 5")
    lams = _grid(args.lambda_grid)
    spec = QuadratureSpec(threads=_threads(args))
    out = Output(args.out, _args_hash(args), args.n, args.quiet)
    stem = f"verify_{case}_n{args.n}"
    header = ["lambda", "predicted", "measured", "remainder", "est_error"]
    if case in LADDER_CASES:
        rep = run_ladder(case, args.n, lams, args.tau_rule, spec)
        out.csv(stem + ".csv", header, rep.csv_rows())
        out.json(stem + ".json", rep.to_json())
        out.say(f"{case}: fitted remainder slope {rep.fitted_slope:.3f} "
                f"(retained decay {rep.retained_decay:.1f}) -> {'pass' if rep.passed else 'FAIL'}")
        return EXIT_OK if rep.passed else EXIT_CRITERIA
    if case == "interaction-eps-derivative":
        rep = eps_derivative_report(args.n, lams)
        out.csv(stem + ".csv", header, rep.csv_rows())
        out.json(stem + ".json", rep.to_json())
        ok = abs(rep.rows[-1].remainder) < abs(rep.rows[0].remainder)
        for r in rep.rows:
            out.say(f"lambda {r.lam:g}: lambda_j d eps / eps = {r.measured:.6f} (limit {r.predicted:g})")
        return EXIT_OK if ok else EXIT_CRITERIA
    if case == "interactions":
        reps = interaction_lemma_suite(args.n, lams, spec=spec)
        rows, ok = [], True
        for rep in reps:
            for r in rep.rows:
                rows.append([rep.case, r.lam, r.predicted, r.measured, r.remainder, r.est_error])
            if rep.rows[0].predicted == 1.0:
                good = abs(rep.rows[-1].remainder) <= 0.1
                ok = ok and good
                out.say(f"{rep.case}: ratio {rep.rows[-1].measured:.6f} at lambda {rep.rows[-1].lam:g}"
                        f" -> {'pass' if good else 'FAIL'}")
            else:
                out.say(f"{rep.case}: {rep.rows[-1].measured:.6g} at lambda {rep.rows[-1].lam:g}")
        out.csv(stem + ".csv", ["item"] + header, rows)
        out.json(stem + ".json", {"reports": [r.to_json() for r in reps], "passed": ok})
        return EXIT_OK if ok else EXIT_CRITERIA
    # hessian-blocks
    rows, reports, ok = [], [], True
    big = [l for l in lams if l >= 100] or lams
    for lam in lams:
        cfg, K = _balanced_pair(args.n, lam)
        rep = hessian_block_report(cfg, K, spec)
        reports.append({"lambda": lam, **rep.to_json()})
        rows.append([lam, rep.max_off_block, rep.smallest_predicted_diag, rep.off_block_ratio,
                     rep.max_intra_coupling, float(np.min(rep.alpha_eig_scaled))])
        if lam in big:
            ok = ok and rep.passed
        out.say(f"lambda {lam:g}: off-block/diag {rep.off_block_ratio:.3e}, "
                f"alpha eigenvalues*lambda^2 {np.array2string(rep.alpha_eig_scaled, precision=4)}, "
                f"center signs {'ok' if rep.center_signs_ok else 'WRONG'}")
    out.csv(stem + ".csv", ["lambda", "max_off_block", "smallest_predicted_diag", "off_block_ratio",
                            "max_intra_block_coupling", "min_alpha_eig_times_lambda2"], rows)
    out.json(stem + ".json", {"reports": reports, "passed": ok})
    return EXIT_OK if ok else EXIT_CRITERIA


# ---------------------------------------------------------------------------
# solve / sweep / hessian


def _load(args) -> RunConfig:
    return load_run_config(args.config)


def _spec_for(rc: RunConfig, args) -> QuadratureSpec:
    return dataclasses.replace(rc.quadrature, threads=_threads(args))


def _out_for(rc: RunConfig, args) -> Output:
    return Output(args.out or rc.output or "bubblered-out", rc.hash, rc.n, args.quiet)


def _trace_rows(res) -> list[list]:
    return [rec.row() for rec in res.trace]


def _trace_header(q: int) -> list[str]:
    return ["iteration", "residual", "step_norm", "damping"] + [f"lambda_{j}" for j in range(q)]


def _solver_errors():
    from .solver import LeftNeighborhoodError, NearKernelError, NoConvergenceError
    return (NoConvergenceError, LeftNeighborhoodError, NearKernelError)


def _target_spec(rc: RunConfig, tau: float):
    from .solver import TargetSpec
    if not rc.targets:
        raise ConfigError("targets are required")
    try:
        return TargetSpec(rc.resolve_targets(), tau, rc.normalization)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e


def cmd_solve(args) -> int:
    from .solver import TauTooLargeError, solve
    rc = _load(args)
    if rc.tau is None:
        raise ConfigError("solve needs 'tau'")
    out = _out_for(rc, args)
    ts = _target_spec(rc, rc.tau)
    try:
        res = solve(ts, rc.K, _spec_for(rc, args), rc.solver)
    except TauTooLargeError as e:
        raise ConfigError(str(e)) from e
    except _solver_errors() as e:
        out.json("solution.json", {"converged": False, "error": str(e)})
        if getattr(e, "trace", None):
            out.csv("newton_trace.csv", _trace_header(ts.q), [r.row() for r in e.trace])
        print(f"no convergence: {e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    out.json("solution.json", {"converged": True, **res.to_json()})
    out.csv("newton_trace.csv", _trace_header(ts.q), _trace_rows(res))
    _print_result(out, res)
    return EXIT_OK


def _print_result(out: Output, res) -> None:
    s = res.summary()
    out.say(f"tau {res.config.tau:g}: {res.newton_iterations} Newton steps, residual {res.residual_norm:.3e}")
    for j, t in enumerate(res.targets.targets):
        out.say(f"  target {j} at {np.array2string(t.location.coords, precision=4)}: "
                f"lambda*sqrt(tau) {s['lambda_sqrt_tau'][j]:.6f}")
    out.say(f"morse index {res.morse_index} (formula: {res.targets.formula_index()})")


def cmd_sweep(args) -> int:
    from .solver import TauTooLargeError, sweep_tau
    rc = _load(args)
    if not rc.tau_sweep:
        raise ConfigError("sweep needs 'tau_sweep'")
    out = _out_for(rc, args)
    ts = _target_spec(rc, rc.tau_sweep[0])
    try:
        results = sweep_tau(ts, rc.tau_sweep, rc.K, _spec_for(rc, args), rc.solver)
    except TauTooLargeError as e:
        raise ConfigError(str(e)) from e
    except ValueError as e:
        raise ConfigError(str(e)) from e
    except _solver_errors() as e:
        out.json("sweep.json", {"converged": False, "error": str(e)})
        print(f"no convergence: {e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    q = ts.q
    header = (["tau"] + [f"lambda_sqrt_tau_{j}" for j in range(q)]
              + [f"alpha_K_power_{j}" for j in range(q)] + ["residual", "morse_index", "J"])
    rows = []
    for k, res in enumerate(results):
        s = res.summary()
        rows.append([res.config.tau] + s["lambda_sqrt_tau"] + s["alpha_K_power"]
                    + [res.residual_norm, res.morse_index, s["J"]])
        out.csv(f"newton_trace_{k}.csv", _trace_header(q), _trace_rows(res))
        _print_result(out, res)
    out.csv("sweep.csv", header, rows)
    out.json("sweep.json", {"converged": True, "results": [r.to_json() for r in results]})
    return EXIT_OK


def cmd_hessian(args) -> int:
    from .functional import eval_reduced_hessian
    from .solver import TauTooLargeError, initial_guess, slice_basis
    rc = _load(args)
    if rc.tau is None:
        raise ConfigError("hessian needs 'tau'")
    out = _out_for(rc, args)
    if rc.configuration is not None:
        cfg = rc.explicit_configuration(rc.tau)
    else:
        try:
            cfg = initial_guess(_target_spec(rc, rc.tau), rc.K, d_min=rc.solver.d_min)
        except TauTooLargeError as e:
            raise ConfigError(str(e)) from e
    spec = _spec_for(rc, args)
    rd = eval_reduced_hessian(cfg, rc.K, spec)
    Q = slice_basis(cfg)
    ev_slice = np.linalg.eigvalsh(Q.T @ rd.hess_reduced @ Q)
    rep = hessian_block_report(cfg, rc.K, spec, hess=rd.hess_reduced)
    out.json("hessian.json", {"config": cfg.to_json(), **rd.to_json(),
                              "eigenvalues": np.linalg.eigvalsh(rd.hess_reduced),
                              "slice_eigenvalues": ev_slice, "block_report": rep.to_json()})
    M = rd.hess_reduced.shape[0]
    out.csv("hessian.csv", [f"c{j}" for j in range(M)], rd.hess_reduced.tolist())
    out.say(f"reduced Hessian {M}x{M}; slice eigenvalues {np.array2string(ev_slice, precision=4)}")
    out.say(f"negative on slice: {int(np.sum(ev_slice < -rep.eta))}; off-block/diag {rep.off_block_ratio:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def shared(top: bool) -> argparse.ArgumentParser:
        # subcommands must not reset options given before the subcommand name
        d = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
        g = _Parser(add_help=False)
        g.add_argument("--out", default=d(None), help="output directory")
        g.add_argument("--threads", type=int, default=d(0), help="quadrature threads (default: all cores)")
        g.add_argument("--quiet", action="store_true", default=d(False),
                       help="suppress the summary on stdout")
        return g

    top, common = shared(True), shared(False)

    p = _Parser(prog="bubblered", description="Bubble-sum reduction calculus on the round sphere.",
                parents=[top])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    c = sub.add_parser("constants", parents=[common], help="constants table and identity checks")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--check", action="store_true")
    c.add_argument("--tol", type=float, default=1e-10)
    c.set_defaults(func=cmd_constants)

    v = sub.add_parser("verify", parents=[common], help="expansion ladders and structure checks")
    v.add_argument("--case", required=True)
    v.add_argument("--n", type=int, default=5)
    v.add_argument("--lambda-grid", dest="lambda_grid")
    v.add_argument("--tau-rule", dest="tau_rule", default=None,
                   choices=["lambda^-2", "zero", "balance"])
    v.set_defaults(func=cmd_verify)

    for name, fn, hlp in (("solve", cmd_solve, "solve the reduced problem"),
                          ("sweep", cmd_sweep, "continuation in tau"),
                          ("hessian", cmd_hessian, "dump the reduced Hessian")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--config", required=True)
        s.set_defaults(func=fn)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required")
        if args.threads < 0:
            raise UsageError("--threads must be non-negative")
        if args.out is None and args.command in ("constants", "verify"):
            args.out = "bubblered-out"
        logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s")
        log.debug("kernel backend: %s", BACKEND)
        return args.func(args)
    except UsageError as e:
        print(f"bubblered: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"bubblered: configuration error: {e}", file=sys.stderr)
        return EXIT_DATAERR
    except OSError as e:
        print(f"bubblered: I/O error: {e}", file=sys.stderr)
        return EXIT_IOERR


if __name__ == "__main__":
    sys.exit(main())
