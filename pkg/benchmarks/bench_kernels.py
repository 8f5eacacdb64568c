"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel is warmed up once (numba compile), then timed as the best of
``--repeat`` runs. Prints one row per kernel and writes nothing.
"""
import argparse
import time

import numpy as np

from lapanet import kernels


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    img = rng.standard_normal((128, 128))
    u = rng.uniform(-3, 3, (2, 128, 128))
    labels = rng.integers(0, 4, (128, 128)).astype(np.int32)
    coil_imgs = rng.standard_normal((4, 64, 64)) + 1j * rng.standard_normal((4, 64, 64))
    kx = rng.uniform(-np.pi, np.pi, 26 * 64)
    ky = rng.uniform(-np.pi, np.pi, 26 * 64)
    n = 20000
    vals = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    iy = rng.integers(0, 64, n)
    ix = rng.integers(0, 64, n)
    resp = rng.standard_normal((25, 64, 64))
    weight = np.outer(np.hanning(16), np.hanning(16))
    tiles = np.array([(y, x) for y in range(0, 49, 8) for x in range(0, 49, 8)], dtype=np.int64)
    pa = rng.uniform(0, 64, (600, 2))
    pb = rng.uniform(0, 64, (600, 2))
    return [
        ("warp_bilinear 128x128", "warp_bilinear", (img, u[0], u[1])),
        ("warp_nearest 128x128", "warp_nearest", (labels, u[0], u[1])),
        ("radial_dft 4 coils, 26 spokes", "radial_dft", (coil_imgs, kx, ky)),
        ("grid_accumulate 20k samples", "grid_accumulate", (vals, iy, ix, 64, 64)),
        ("tile_normal_eq 49 tiles, r=2", "tile_normal_eq", (resp, weight, tiles)),
        ("directed_hausdorff 600x600", "directed_hausdorff", (pa, pb)),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for label, name, a in cases(rng):
        t_nb = best_of(getattr(kernels, name + "_numba"), a, args.repeat)
        t_np = best_of(getattr(kernels, name + "_numpy"), a, args.repeat)
        print(f"{label:34s} {1e3 * t_nb:10.3f} {1e3 * t_np:10.3f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
