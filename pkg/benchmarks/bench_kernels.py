"""Time the numba kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n-obs 20000] [--rank 8] [--d 6]
"""

import argparse
import timeit

import numpy as np

from ttgp import _kernels
from ttgp.tt import tt_random


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-obs", type=int, default=20000)
    ap.add_argument("--rank", type=int, default=8)
    ap.add_argument("--d", type=int, default=6)
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    ranks = (1,) + (args.rank,) * (args.d - 1) + (1,)
    tt = tt_random((args.n,) * args.d, ranks, seed=0)
    packed = tt.packed()
    rng = np.random.default_rng(0)
    idx = rng.integers(0, args.n, size=(args.n_obs, args.d))
    w = rng.standard_normal(args.n_obs)

    # compile outside the timed region
    _kernels.eval_many_nb(*packed, idx[:2])
    _kernels.grad_many_nb(*packed, idx[:2], w[:2])

    cases = {
        "eval": (lambda: _kernels.eval_many_np(*packed, idx), lambda: _kernels.eval_many_nb(*packed, idx)),
        "grad": (lambda: _kernels.grad_many_np(*packed, idx, w),
                 lambda: _kernels.grad_many_nb(*packed, idx, w)),
    }
    print(f"d={args.d} n={args.n} r={args.rank} N={args.n_obs}")
    print(f"{'kernel':<6} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>8}")
    for name, (f_np, f_nb) in cases.items():
        np.testing.assert_allclose(f_nb(), f_np(), rtol=1e-10, atol=1e-10)
        t_np = min(timeit.repeat(f_np, number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(f_nb, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<6} {t_np:12.2f} {t_nb:12.2f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
