"""Compare the compiled and numpy dual kernels.

Run with ``python benchmarks/bench_kernels.py``.  Reports the time of one
value/gradient/Hessian evaluation and of a full Newton solve per backend.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from bregcal import kernels, solver
from bregcal.entropy import get_generator
from bregcal.solver import CalibrationProblem, Scale


def _best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _instance(n, p, seed):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    w0 = rng.uniform(1.5, 3.0, n)
    targets = X.T @ w0 / n + np.r_[0.0, rng.normal(scale=0.05, size=p - 1)]
    return CalibrationProblem(X, w0, targets, Scale.MEAN)


def bench(sizes, p, generators, repeat):
    backends = {"python": kernels.get_backend("python")}
    try:
        backends["cython"] = kernels.get_backend("cython")
    except ImportError:
        print("compiled extension not built; timing the numpy backend only")
    rows = []
    for key in generators:
        gen = get_generator(key)
        for n in sizes:
            prob = _instance(n, p, seed=n)
            dual = solver._bc_dual(gen, prob)
            lo, hi = dual.bounds()
            lam = np.zeros(p)
            times = {}
            for name, mod in backends.items():
                def one():
                    mod.dual_terms(gen.code, float(gen.alpha), dual.offset, dual.X, lam,
                                   dual.unit_scale, lo, hi, True)

                def full():
                    solver.solve(gen, prob)

                saved = kernels._impl
                kernels._impl = mod
                try:
                    times[name] = (_best_of(one, repeat), _best_of(full, max(1, repeat // 5)))
                finally:
                    kernels._impl = saved
            rows.append((key, n, times))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", default="1000,10000,100000")
    ap.add_argument("--p", type=int, default=10)
    ap.add_argument("--generators", default="kl,el,hd,ce")
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = bench(sizes, args.p, args.generators.split(","), args.repeat)
    print(f"{'gen':<5}{'n':>8}{'py eval ms':>12}{'cy eval ms':>12}{'speedup':>9}"
          f"{'py solve ms':>13}{'cy solve ms':>13}")
    for key, n, t in rows:
        py = t["python"]
        cy = t.get("cython", (np.nan, np.nan))
        print(f"{key:<5}{n:>8}{py[0] * 1e3:>12.3f}{cy[0] * 1e3:>12.3f}{py[0] / cy[0]:>9.1f}"
              f"{py[1] * 1e3:>13.2f}{cy[1] * 1e3:>13.2f}")


if __name__ == "__main__":
    main()
