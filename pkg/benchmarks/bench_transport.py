"""Time the compiled and pure-Python transport kernels on the same problems.

    python3 benchmarks/bench_transport.py [--repeats 3]
"""

import argparse
import time

import numpy as np

from proto_extract import _simplex_py

try:
    from proto_extract import _simplex as _simplex_c
except ImportError:
    _simplex_c = None

SIZES = [(10, 10), (50, 50), (50, 150), (100, 300)]


def problem(rng, n, m, d=5):
    x, y = rng.random((n, d)), rng.random((m, d))
    C = ((x[:, None] - y[None]) ** 2).sum(-1)
    return np.full(n, 1.0 / n), np.full(m, 1.0 / m), C


def best_time(solve, args, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = solve(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'size':>10}  {'python (ms)':>12}  {'cython (ms)':>12}  {'speedup':>8}  {'pivots':>7}")
    for n, m in SIZES:
        prob = problem(rng, n, m)
        t_py, (_, cost_py, it) = best_time(_simplex_py.solve, prob, args.repeats)
        if _simplex_c is None:
            print(f"{n:>4}x{m:<5}  {1e3 * t_py:12.2f}  {'n/a':>12}  {'n/a':>8}  {it:7d}")
            continue
        t_c, (_, cost_c, _) = best_time(_simplex_c.solve, prob, args.repeats)
        assert abs(cost_py - cost_c) < 1e-12
        print(f"{n:>4}x{m:<5}  {1e3 * t_py:12.2f}  {1e3 * t_c:12.2f}  {t_py / t_c:7.1f}x  {it:7d}")


if __name__ == "__main__":
    main()
