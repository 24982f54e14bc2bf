#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs each hot kernel on a synthetic eye and prints per-call times plus
speedups.  Requires numba importable (do not set SIPSEG_BACKEND=numpy,
that would hide the jitted side).

    python3 benchmarks/bench_backends.py [--size 128] [--repeats 3]
"""

import argparse
import math
import time

import numpy as np

from sipseg import kernels
from sipseg.imgcore import SyntheticEyeSpec, render_synthetic_eye


def timed(fn, *args, repeats=3):
    fn(*args)  # warm-up (jit compile, cache effects)
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=128)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not kernels.HAS_NUMBA:
        print("numba backend unavailable (SIPSEG_BACKEND=numpy set, or numba missing)")
        return 1

    size = args.size
    short = size
    spec = SyntheticEyeSpec(
        width=size,
        height=size,
        pupil_center=(size / 2, size / 2),
        pupil_radius=0.11 * short,
        iris_radius=0.25 * short,
        sclera_axes=(0.42 * short, 0.32 * short),
        noise_variance=0.002,
        eyelash_count=6,
    )
    img, _ = render_synthetic_eye(spec, seed=0)

    rows = []

    rows.append(
        (
            "nlm (h=7/255, 25, 17)",
            timed(kernels.nlm_numba, img, 7 / 255, 25, 17, 0.0, repeats=args.repeats),
            timed(kernels.nlm_numpy, img, 7 / 255, 25, 17, 0.0, repeats=args.repeats),
        )
    )
    rows.append(
        (
            "atmed (ws=21)",
            timed(kernels.atmed_numba, img, 21, repeats=args.repeats),
            timed(kernels.atmed_numpy, img, 21, repeats=args.repeats),
        )
    )
    rows.append(
        (
            "fill_holes",
            timed(kernels.fill_holes_numba, img, repeats=args.repeats),
            timed(kernels.fill_holes_numpy, img, repeats=args.repeats),
        )
    )

    radii = np.arange(5.0, 0.25 * size + 1)
    angles = 2 * np.pi * np.arange(360) / 360
    sin_t, cos_t = np.sin(angles), np.cos(angles)
    gy, gx = np.mgrid[0:size:2, 0:size:2]
    cy = gy.ravel().astype(np.float64)
    cx = gx.ravel().astype(np.float64)
    rows.append(
        (
            "circle_profiles (dio scan)",
            timed(kernels.circle_profiles_numba, img, cy, cx, radii, sin_t, cos_t, repeats=args.repeats),
            timed(kernels.circle_profiles_numpy, img, cy, cx, radii, sin_t, cos_t, repeats=args.repeats),
        )
    )

    print(f"\nkernel benchmarks on a {size}x{size} synthetic eye (best of {args.repeats})\n")
    print(f"{'kernel':<28} {'numba':>10} {'numpy':>10} {'speedup':>9}")
    for name, t_nb, t_np in rows:
        print(f"{name:<28} {t_nb * 1e3:>8.1f}ms {t_np * 1e3:>8.1f}ms {t_np / t_nb:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
