"""Time the compiled and numpy kernels, and a full solver fit with each.

Usage: python benchmarks/bench_kernels.py [--n 20000] [--d 5] [--sources 10] [--repeat 20]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from transfer_er import kernels


def kernel_rows(n, d, n_sources, repeat):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((n, d))
    a = rng.integers(0, n_sources, n)
    b = (a + rng.integers(1, n_sources, n)) % n_sources
    w0, W = rng.standard_normal(d), rng.standard_normal((n_sources, d))
    r = rng.standard_normal(n)
    v = rng.standard_normal(n_sources * d)
    rows = []
    for name, impl in sorted(kernels.available_backends().items()):
        cases = {
            "forward": lambda: kernels.forward(X, a, b, w0, W, impl=impl),
            "backward": lambda: kernels.backward(X, a, b, r, n_sources, impl=impl),
            "soft_threshold": lambda: kernels.soft_threshold(v, 0.3, impl=impl),
        }
        for op, fn in cases.items():
            best = min(timeit.repeat(fn, number=1, repeat=repeat))
            rows.append((op, name, best))
    return rows


FIT = """
import time
from transfer_er import kernels
from transfer_er.solver import SolverConfig, fit_transfer
from transfer_er.synth import SynthConfig, generate
ds = generate(SynthConfig(n_sources=10, pairs_per_source_pair=100, test_pairs=10))
t = time.perf_counter()
_, tr = fit_transfer(ds.train, SolverConfig(lambda_a=1.0, tol=1e-10))
print(kernels.BACKEND, len(tr), time.perf_counter() - t)
"""


def fit_rows():
    out = []
    for pure in ("0", "1"):
        env = dict(os.environ, TRANSFER_ER_PURE=pure)
        res = subprocess.run([sys.executable, "-c", FIT], env=env, capture_output=True, text=True,
                             check=True)
        backend, iters, secs = res.stdout.split()
        out.append((backend, int(iters), float(secs)))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--sources", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    if "cython" not in kernels.available_backends():
        print("compiled extension not built; only the numpy kernels are timed")
    rows = kernel_rows(args.n, args.d, args.sources, args.repeat)
    print(f"kernels: n={args.n} d={args.d} sources={args.sources}, best of {args.repeat}")
    print(f"{'op':<16}{'backend':<10}{'ms':>10}")
    for op, name, secs in rows:
        print(f"{op:<16}{name:<10}{secs * 1e3:>10.3f}")
    print("\nfit_transfer, 10 sources x 45 pairs x 100 examples:")
    for backend, iters, secs in fit_rows():
        print(f"{backend:<10}{iters:>6} iters {secs:>8.3f} s")


if __name__ == "__main__":
    main()
