"""Compare the numba kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--size N] [--repeat R]

Prints per-kernel timings for both paths (compilation excluded) and the
wall time of an end-to-end saddle classification run in a subprocess with
and without NORMSURF_DISABLE_NUMBA.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from normsurf import _accel, kernels

E2E = """
import time, numpy as np
from normsurf import norms, surfaces, charts
amb = norms.QuarticPerturbedNorm.diagonal(4, 0.1)
s = surfaces.ImmersedSurface(amb, charts.fsigma(0.01), [[-0.05, 0.05], [-0.05, 0.05]])
xs = np.linspace(-0.05, 0.05, 9)
surfaces.classify_region(s, xs[:2], xs[:2])
t = time.perf_counter()
surfaces.classify_region(s, xs, xs)
print(time.perf_counter() - t)
"""


def cases(n, rng):
    A = rng.standard_normal((4, 4))
    A = A @ A.T + 4 * np.eye(4)
    V = rng.standard_normal((n, 4))
    E = 4 * np.eye(4, dtype=np.int64)
    c = np.ones(4)
    a, b = rng.standard_normal(16), rng.standard_normal(16)
    th = rng.uniform(0, 2 * np.pi, n)
    P = rng.standard_normal((n, 2, 2))
    P = P + P.transpose(0, 2, 1)
    Q = rng.standard_normal((n, 2, 2))
    Q = Q + Q.transpose(0, 2, 1)
    return {
        "quadform": ((A, V), kernels.quadform_loop, kernels.quadform_np),
        "monomial_jets": ((E, c, V), kernels.monomial_jets_loop, kernels.monomial_jets_np),
        "fourier_series": ((a, b, th), kernels.fourier_series_loop, kernels.fourier_series_np),
        "pencil_sweep": ((P[: n // 10], Q[: n // 10], 720), kernels.pencil_sweep_loop, kernels.pencil_sweep_np),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"backend selected at import: {_accel.backend()}")
    print(f"{'kernel':<16}{'loop [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, (arg, loop, vec) in cases(args.size, rng).items():
        loop(*arg)  # compile outside the timing
        t_loop = min(timeit.repeat(lambda: loop(*arg), number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(lambda: vec(*arg), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<16}{t_loop:>12.2f}{t_np:>12.2f}{t_np / t_loop:>10.1f}")
    for flag in ("0", "1"):
        env = dict(os.environ, NORMSURF_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        label = "numpy" if flag == "1" else "numba"
        print(f"classify 81 nodes ({label}): {float(out.stdout) * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
