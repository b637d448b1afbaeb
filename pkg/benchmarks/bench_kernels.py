"""Time the compiled kernels against the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py``; prints one line per kernel
with the per-call time of each backend and the speed-up.
"""
import argparse
import time

import numpy as np

from delaydtp import _backend
from delaydtp.analysis import history_windows
from delaydtp.path import default_mesh, make_path


def _timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n_nodes):
    n, dt, m = default_mesh(1.2, 100.0, n_nodes)
    path = make_path(100.0, n, "bump", 0.1, dt=dt)
    r, g = np.empty((n, 2)), np.empty((n + 1, 2))
    out = np.empty((n + 1, 2))
    noise = np.random.default_rng(0).standard_normal((20000, 2))
    hist = history_windows(make_path(10.0, 40, "bump", 0.2), 4)

    def action_grad(k):
        return lambda: k.action_grad(path.nodes, m, dt, 1.0, r, g)

    def tridiag(k):
        return lambda: k.tridiag_solve(g, 2.0 / dt + dt, -1.0 / dt, out)

    def relax(k):
        def run():
            x = path.nodes.copy()
            k.relax_loop(x, m, dt, 1.0, 1e-12, 20, 1.0, 1.0, 0.5, 1e-4, 1, 1.0, 0, 1e-7, 1e-6,
                         np.empty(0))
        return run

    def advance(k):
        def run():
            ring = np.tile([-1.0, 0.0], (1201, 1))
            k.advance(0, ring, 1200, noise, 0, noise.shape[0], 1e-3, 1.0, 0.0045, -np.inf, np.inf)
        return run

    def lifetimes(k):
        def run():
            t, lab = np.empty(41), np.empty(41, dtype=np.int_)
            k.relax_times(hist, 4, 0.25, 1.0, 1e-5, 30.0, t, lab)
        return run

    return {
        f"action_grad (N={n})": action_grad,
        f"tridiag_solve (N={n})": tridiag,
        f"relax_loop x20 (N={n})": relax,
        "advance (20000 steps)": advance,
        "relax_times (41 nodes)": lifetimes,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        compiled = _backend.get("cython")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run pip install -e . first")
    pure = _backend.get("python")
    print(f"{'kernel':28s} {'python':>12s} {'cython':>12s} {'speed-up':>9s}")
    for name, make in cases(args.nodes).items():
        tp = _timeit(make(pure), args.repeat)
        tc = _timeit(make(compiled), args.repeat)
        print(f"{name:28s} {tp * 1e3:10.3f}ms {tc * 1e3:10.3f}ms {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
