"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat N]

First calls (JIT compilation) are timed separately and excluded from the
steady-state numbers.  Each row also reports the max abs difference between
the two backends.
"""

import argparse
import time

import numpy as np

from swelab import _accel, kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    n = 1024
    t = rng.uniform(0.5, 2.0, n)
    x = rng.uniform(-1.0, 1.0, n)
    yield "cone covariance 1024x1024", lambda b: kernels.cone_covariance_matrix(t, x, 0.0, np.inf, 0.5, backend=b)

    yield "counter normals 64x65536", lambda b: kernels.counter_normals(7, np.arange(64), 1 << 16, backend=b)

    lam = np.linspace(1.0, 2.0, 4097)
    v = np.cumsum(rng.normal(size=lam.size)) * 0.01
    yield "pair scan 4097 pts, lag 1/8", lambda b: kernels.pair_band_scan(
        lam, v, 0, 4096, 4096, 0.125, 0.125, 4, 0.7, 1.5, backend=b)[0]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.NUMBA_INSTALLED:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':32s} {'numpy s':>10s} {'numba s':>10s} {'speedup':>8s} {'jit s':>8s} {'max diff':>10s}")
    for name, fn in cases():
        t = time.perf_counter()
        a = fn("numba")
        jit = time.perf_counter() - t
        b = fn("numpy")
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        diff = float(np.max(np.abs(a - b)))
        print(f"{name:32s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.2f} {jit:8.2f} {diff:10.2e}")


if __name__ == "__main__":
    main()
