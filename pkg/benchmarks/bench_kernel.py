"""Compiled chunk kernel vs the numpy fallback.

    python benchmarks/bench_kernel.py [--repeat 3]

Runs the moment accumulation for a few configurations with both backends,
checks that the results agree and prints wall times.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from bubblered import _kernel_py
from bubblered.bubbles import Configuration
from bubblered.expansions import ladder_K
from bubblered.functional import _degree
from bubblered.quadrature import QuadratureSpec, iter_chunks

try:
    from bubblered import _kernel
except ImportError:  # extension not built
    _kernel = None


def _cases():
    n = 5
    e = np.eye(n + 1)
    yield "q=1 lam=100", Configuration(n, 1e-4, [1.0], [e[0]], [100.0])
    yield "q=2 lam=100", Configuration(n, 1e-4, [1.0, 1.0], [e[0], -e[0]], [100.0, 100.0])
    yield "q=3 lam=50", Configuration(n, 1e-4, [1.0, 1.0, 1.0], [e[0], -e[0], e[5]],
                                      [50.0, 50.0, 50.0])


def _run(fn, cfg, K, chunks, level):
    p = cfg.p
    out = []
    for X, W in chunks:
        out.append(fn(X, W, K.values(X), cfg.centers, np.ascontiguousarray(cfg.frames),
                      cfg.lams, cfg.alpha, p, level))
    return out


def _time(fn, *args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, res


def _max_rel(a, b):
    worst = 0.0
    for ra, rb in zip(a, b):
        for key in ra:
            x, y = np.asarray(ra[key]), np.asarray(rb[key])
            scale = max(np.max(np.abs(y)), 1e-300)
            worst = max(worst, float(np.max(np.abs(x - y)) / scale))
    return worst


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--level", type=int, default=2, choices=(0, 1, 2))
    args = ap.parse_args(argv)
    K = ladder_K(5)
    spec = QuadratureSpec()
    print(f"{'case':<14}{'nodes':>10}{'numpy [s]':>12}{'compiled [s]':>14}{'speedup':>9}{'max rel diff':>14}")
    for name, cfg in _cases():
        chunks = []
        for mk in iter_chunks(cfg, spec, _degree(K)):
            X, W = mk()
            chunks.append((np.ascontiguousarray(X), np.ascontiguousarray(W)))
        nodes = sum(len(W) for _, W in chunks)
        t_py, r_py = _time(_run, _kernel_py.accumulate, cfg, K, chunks, args.level, repeat=args.repeat)
        if _kernel is None:
            print(f"{name:<14}{nodes:>10}{t_py:>12.3f}{'n/a':>14}")
            continue
        t_c, r_c = _time(_run, _kernel.accumulate, cfg, K, chunks, args.level, repeat=args.repeat)
        print(f"{name:<14}{nodes:>10}{t_py:>12.3f}{t_c:>14.3f}{t_py / t_c:>9.2f}{_max_rel(r_c, r_py):>14.2e}")


if __name__ == "__main__":
    main()
