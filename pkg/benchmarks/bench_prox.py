"""Benchmark the compiled sorted-L1 prox kernel against the pure-python fallback.

Usage: python3 benchmarks/bench_prox.py [--sizes 100,1000,10000] [--repeats 200]

The kernel is the pool-adjacent-violators pass inside the proximal
operator, executed once per inner solver iteration; end-to-end solver
impact is reported as well.
"""

import argparse
import time

import numpy as np

from sqrtsparse import DesignMatrix, RegressionData, SolverConfig, prox_backend, sqrt_slope_lambdas
from sqrtsparse import _prox_py
from sqrtsparse.penalties import _kernel as active_kernel
from sqrtsparse.solvers import fit_sqrt_slope

try:
    from sqrtsparse import _prox_fast
except ImportError:
    _prox_fast = None


def time_kernel(kernel, z, repeats):
    out = kernel.decreasing_nonneg_projection(z)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        out = kernel.decreasing_nonneg_projection(z)
    del out
    return (time.perf_counter() - t0) / repeats


def bench_kernels(sizes, repeats):
    rng = np.random.default_rng(0)
    print(f"active backend: {prox_backend()}")
    print(f"{'p':>8} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for p in sizes:
        z = np.ascontiguousarray(np.sort(rng.normal(size=p))[::-1])
        t_py = time_kernel(_prox_py, z, repeats)
        if _prox_fast is not None:
            t_c = time_kernel(_prox_fast, z, repeats)
            print(f"{p:>8} {t_py * 1e6:>10.1f}us {t_c * 1e6:>10.1f}us {t_py / t_c:>8.1f}x")
        else:
            print(f"{p:>8} {t_py * 1e6:>10.1f}us {'n/a':>12} {'n/a':>9}")


def bench_solver(n=400, p=800):
    """End-to-end square-root slope fit with each kernel."""
    import sqrtsparse.penalties as pen

    rng = np.random.default_rng(1)
    X = rng.normal(size=(n, p))
    X /= np.sqrt(np.mean(X * X, axis=0))
    beta = np.zeros(p)
    beta[:5] = 1.0
    y = X @ beta + rng.normal(size=n)
    data = RegressionData(design=DesignMatrix(entries=X), response=y)
    seq = sqrt_slope_lambdas(n, p, 1.2)
    cfg = SolverConfig(max_outer_iters=60, objective_tol=1e-7, kkt_tol=1e-6)

    kernels = [("python", _prox_py)]
    if _prox_fast is not None:
        kernels.append(("compiled", _prox_fast))
    print(f"\nsquare-root slope fit at {n}x{p}:")
    for name, kernel in kernels:
        pen._kernel = kernel
        fit_sqrt_slope(data, seq, cfg)  # warm up
        t0 = time.perf_counter()
        fit = fit_sqrt_slope(data, seq, cfg)
        elapsed = time.perf_counter() - t0
        print(f"  {name:>9}: {elapsed * 1e3:8.1f} ms (converged={fit.converged})")
    pen._kernel = active_kernel


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="100,1000,10000")
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    bench_kernels(sizes, args.repeats)
    bench_solver()


if __name__ == "__main__":
    main()
