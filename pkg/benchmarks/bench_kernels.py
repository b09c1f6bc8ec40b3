"""Compare the numba and pure-numpy kernels.

Run: python3 benchmarks/bench_kernels.py --resolution 32 --repeats 5
"""
import argparse
import time

import numpy as np

from direct_image import kernels


def best_of(func, args, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = func(*args)
        best = min(best, time.perf_counter() - t0)
    return best * 1e3, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--resolution", type=int, default=32)
    ap.add_argument("--levels", type=int, default=8)
    ap.add_argument("--degree", type=int, default=3)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    N = args.resolution
    g = (np.arange(N) + 0.5) / N
    x, y = (a.ravel() for a in np.meshgrid(g, g, indexing="ij"))
    lv = (x, y, args.degree, args.levels, 2 * np.pi * args.degree, 0.3)
    b = kernels.landau_values_numpy(*lv)[:, : 2 * args.degree]
    rng = np.random.default_rng(0)
    w = rng.random((x.size, x.size))
    tg = (b, b, w)

    # warm up the JIT
    kernels.landau_values_numba(*lv)
    kernels.tensor_gram_numba(*tg)

    print(f"{'kernel':14s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, args_ in (("landau_values", lv), ("tensor_gram", tg)):
        t_np, r_np = best_of(getattr(kernels, f"{name}_numpy"), args_, args.repeats)
        t_nb, r_nb = best_of(getattr(kernels, f"{name}_numba"), args_, args.repeats)
        diff = float(np.abs(r_np - r_nb).max() / np.abs(r_np).max())
        print(f"{name:14s} {t_np:10.2f} {t_nb:10.2f} {t_np / t_nb:8.2f} {diff:10.1e}")


if __name__ == "__main__":
    main()
