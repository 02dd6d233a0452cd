"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once untimed per path so numba compilation is excluded.
"""

import argparse
import timeit

import numpy as np

from semgraph import _accel
from semgraph.clustering import dbscan_labels
from semgraph.geometry import DepthImage, back_project
from semgraph.synthetic import DEFAULT_INTRINSICS, SceneObject, look_at, render


def depth_frame():
    objects = [
        SceneObject("Table", "brown", "wood", (0.0, 0.0, 0.4), (0.6, 0.4, 0.4)),
        SceneObject("Mug", "red", "ceramic", (0.8, 0.6, 0.1), (0.06, 0.06, 0.1)),
    ]
    depth, _ = render(objects, look_at((2.5, 1.0, 1.2), (0, 0, 0.3)), DEFAULT_INTRINSICS)
    return DepthImage.from_array(np.round(depth * 1000).astype(np.uint16))


def cases():
    img = depth_frame()
    rng = np.random.default_rng(0)
    blobs = rng.uniform(-2, 2, size=(40, 3))
    cloud = blobs[rng.integers(0, 40, 20_000)] + rng.normal(scale=0.03, size=(20_000, 3))
    return [
        ("back_project 640x480 stride 1", lambda: back_project(img, DEFAULT_INTRINSICS, 1, 6.0)),
        ("back_project 640x480 stride 2", lambda: back_project(img, DEFAULT_INTRINSICS, 2, 6.0)),
        ("dbscan 20k points eps 0.05", lambda: dbscan_labels(cloud, 0.05, 10)),
        ("dbscan 5k points eps 0.05", lambda: dbscan_labels(cloud[:5000], 0.05, 10)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'kernel':34s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fn in cases():
        best = {}
        for use in (True, False):
            _accel.USE_NUMBA = use
            fn()
            best[use] = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:34s} {best[True]:10.2f} {best[False]:10.2f} {best[False] / best[True]:7.1f}x")


if __name__ == "__main__":
    main()
