#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-NumPy reference.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Covers the three hot paths: the filter loop (dominates threshold grid
search), the LSTM sequence recurrences (dominate training), and the windowed
detector statistics.
"""

import argparse
import time

import numpy as np

from zvnav._kernels import _reference, native_available

G = 9.8065


def timeit(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if not native_available:
        raise SystemExit("compiled backend not built; run pip install -e . first")
    from zvnav._kernels import _native

    rng = np.random.default_rng(0)
    rows = []

    # filter loop: one minute of walking at 200 Hz with ~40% stance
    n = 12000
    t = np.arange(n) / 200.0
    accel = rng.normal(0, 0.5, (n, 3)) + [0, 0, G]
    gyro = rng.normal(0, 0.3, (n, 3))
    flags = (rng.random(n) < 0.4).astype(np.uint8)
    q0 = np.array([1.0, 0.0, 0.0, 0.0])
    P0 = np.eye(9) * 1e-6
    eskf_args = (t, accel, gyro, flags, q0, P0, 0.02, 0.002, 0.01, G)
    rows.append(
        (
            "filter run (12k steps)",
            timeit(lambda: _reference.eskf_run(*eskf_args), args.repeat),
            timeit(lambda: _native.eskf_run(*eskf_args), args.repeat),
        )
    )

    # LSTM recurrences at training batch size
    for H in (16, 80):
        B, T = 256, 100
        xp = rng.normal(0, 1, (B, T, 4 * H))
        Wh = rng.normal(0, 0.2, (H, 4 * H))
        rows.append(
            (
                f"lstm forward (B={B}, T={T}, H={H})",
                timeit(lambda: _reference.lstm_seq_forward(xp, Wh), args.repeat),
                timeit(lambda: _native.lstm_seq_forward(xp, Wh), args.repeat),
            )
        )
        h, c, gates, tc = (
            np.ascontiguousarray(a) for a in _reference.lstm_seq_forward(xp, Wh)
        )
        dh = rng.normal(0, 1, (B, T, H))
        rows.append(
            (
                f"lstm backward (B={B}, T={T}, H={H})",
                timeit(lambda: _reference.lstm_seq_backward(dh, c, gates, tc, Wh), args.repeat),
                timeit(lambda: _native.lstm_seq_backward(dh, c, gates, tc, Wh), args.repeat),
            )
        )

    # detector statistics over a long log
    n = 100000
    accel = rng.normal(0, 1, (n, 3)) + [0, 0, G]
    gyro = rng.normal(0, 1, (n, 3))
    rows.append(
        (
            "stance statistic (100k samples, N=5)",
            timeit(lambda: _reference.shoe_statistics(accel, gyro, 5, 1e-4, 1e-6, G), args.repeat),
            timeit(lambda: _native.shoe_statistics(accel, gyro, 5, 1e-4, 1e-6, G), args.repeat),
        )
    )
    rows.append(
        (
            "rate-energy statistic (100k samples, N=5)",
            timeit(lambda: _reference.ared_statistics(gyro, 5), args.repeat),
            timeit(lambda: _native.ared_statistics(gyro, 5), args.repeat),
        )
    )

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'native':>10}  {'speedup':>8}")
    for name, t_py, t_cy in rows:
        print(f"{name:<{width}}  {t_py * 1e3:>8.1f}ms  {t_cy * 1e3:>8.1f}ms  {t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
