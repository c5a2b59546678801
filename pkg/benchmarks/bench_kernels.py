"""Compare the compiled and numpy training kernels.

Times one loss-and-gradient evaluation on a full mini-batch (64 rows times
M transformations, projection size 32) for both backends, checks that they
agree, and reports the speedup.

    python benchmarks/bench_kernels.py [--transforms 32 256] [--repeat 20]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from stoc import _kernel_py, goad

try:
    from stoc import _kernel
except ImportError:  # extension not built
    _kernel = None


def batch(M: int, r: int = 32, rows: int = goad.BATCH_ROWS, seed: int = 0):
    rng = np.random.default_rng(seed)
    params = goad.init_params(r, M, rng)
    Z = rng.standard_normal((rows * M, r))
    return params, Z, np.tile(np.arange(M), rows)


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--transforms", type=int, nargs="+", default=[32, 256])
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)

    if _kernel is None:
        print("compiled kernel not built; only the numpy backend is available")
    print(f"{'M':>5} {'numpy ms':>10} {'compiled ms':>12} {'speedup':>8} {'max |dgrad|':>12}")
    for M in args.transforms:
        params, Z, y = batch(M)
        t_py = best_of(lambda: _kernel_py.loss_and_grads(params, Z, y), args.repeat)
        if _kernel is None:
            print(f"{M:>5} {1e3 * t_py:>10.2f} {'-':>12} {'-':>8} {'-':>12}")
            continue
        t_c = best_of(lambda: _kernel.loss_and_grads(params, Z, y), args.repeat)
        _, g_py = _kernel_py.loss_and_grads(params, Z, y)
        _, g_c = _kernel.loss_and_grads(params, Z, y)
        diff = max(float(np.abs(a - b).max()) for a, b in zip(g_py, g_c))
        print(f"{M:>5} {1e3 * t_py:>10.2f} {1e3 * t_c:>12.2f} {t_py / t_c:>7.1f}x {diff:>12.1e}")


if __name__ == "__main__":
    main()
