"""Benchmark the numba-jitted kernels against the pure-numpy fallbacks.

Run:  python3 benchmarks/bench_kernels.py
"""
import time

import numpy as np

from momentset import kernels


def timeit(fn, *args, repeats=50):
    fn(*args)  # warm up (triggers jit compilation)
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def bench_assign(m, n, rng):
    cost = rng.standard_normal((m, n))
    a = timeit(kernels.assign_rect, cost)
    b = timeit(kernels.assign_rect_numpy, cost)
    assert np.array_equal(kernels.assign_rect(cost),
                          kernels.assign_rect_numpy(cost))
    return a, b


def bench_interp(rows, length, d, rng):
    table = rng.standard_normal((rows, d))
    lo = rng.integers(0, rows - 1, length)
    hi = lo + 1
    frac = rng.uniform(0, 1, length)
    g = rng.standard_normal((length, d))
    fwd = (timeit(kernels.interp_rows, table, lo, hi, frac),
           timeit(kernels.interp_rows_numpy, table, lo, hi, frac))
    bwd = (timeit(kernels.interp_rows_grad, g, lo, hi, frac, rows),
           timeit(kernels.interp_rows_grad_numpy, g, lo, hi, frac, rows))
    return fwd, bwd


def main():
    rng = np.random.default_rng(0)
    print(f"numba path enabled: {kernels.USE_NUMBA}")
    print(f"{'kernel':<32}{'jit (us)':>12}{'numpy (us)':>12}{'speedup':>10}")
    for m, n in [(4, 16), (16, 16), (64, 256)]:
        a, b = bench_assign(m, n, rng)
        print(f"{f'assign_rect {m}x{n}':<32}{a * 1e6:>12.1f}{b * 1e6:>12.1f}"
              f"{b / a:>10.2f}x")
    for rows, length, d in [(64, 8, 64), (64, 512, 64), (128, 4096, 512)]:
        fwd, bwd = bench_interp(rows, length, d, rng)
        print(f"{f'interp_rows {rows}->{length} d={d}':<32}"
              f"{fwd[0] * 1e6:>12.1f}{fwd[1] * 1e6:>12.1f}"
              f"{fwd[1] / fwd[0]:>10.2f}x")
        print(f"{f'interp_rows_grad {rows}<-{length}':<32}"
              f"{bwd[0] * 1e6:>12.1f}{bwd[1] * 1e6:>12.1f}"
              f"{bwd[1] / bwd[0]:>10.2f}x")


if __name__ == "__main__":
    main()
