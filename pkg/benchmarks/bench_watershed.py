"""Benchmark the priority-flood watershed: numba kernel vs pure-Python fallback.

Usage: python benchmarks/bench_watershed.py [--size 256] [--scenes 5] [--reps 3]

The numba path is toggled per timing run through the SGFSIS_NO_NUMBA
environment flag (read at call time), so both flavours run in one process
and their outputs are compared bitwise.
"""

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from sgfsis.labels import InstanceLabelMap, convert_labels
from sgfsis.synthetic import generate_blob_raster
from sgfsis.watershed import derive_markers, watershed_segment


def build_scene(seed, size):
    raster = generate_blob_raster(seed, size=size, n_blobs=(size // 8, size // 4))
    ids = [int(i) for i in np.unique(raster) if i != 0]
    lm = InstanceLabelMap(raster, {i: 1 for i in ids}, {1: "C"})
    ch = convert_labels(lm, boundary_radius=1, centroid_radius=1)
    fg = ch.foreground.astype(np.float64)
    markers = derive_markers(fg, ch.boundary.astype(np.float64),
                             ch.centroid.astype(np.float64))
    return markers, fg


def time_flood(scenes, reps):
    best = float("inf")
    result = None
    for _ in range(reps):
        start = time.perf_counter()
        result = [watershed_segment(m, fg) for m, fg in scenes]
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--scenes", type=int, default=5)
    parser.add_argument("--reps", type=int, default=3)
    args = parser.parse_args()

    scenes = [build_scene(seed, args.size) for seed in range(args.scenes)]
    pixels = args.scenes * args.size * args.size

    os.environ["SGFSIS_NO_NUMBA"] = ""
    # warm-up triggers the jit compile outside the timed region
    watershed_segment(*scenes[0])
    t_numba, out_numba = time_flood(scenes, args.reps)

    os.environ["SGFSIS_NO_NUMBA"] = "1"
    t_python, out_python = time_flood(scenes, args.reps)
    os.environ["SGFSIS_NO_NUMBA"] = ""

    identical = all(
        np.array_equal(a.labels, b.labels) for a, b in zip(out_numba, out_python)
    )
    print(f"scenes: {args.scenes} x {args.size}x{args.size} "
          f"({pixels / 1e6:.2f} Mpx total), best of {args.reps}")
    print(f"numba flood:  {t_numba * 1e3:9.1f} ms  "
          f"({pixels / t_numba / 1e6:7.1f} Mpx/s)")
    print(f"python flood: {t_python * 1e3:9.1f} ms  "
          f"({pixels / t_python / 1e6:7.1f} Mpx/s)")
    print(f"speedup: {t_python / t_numba:.1f}x, outputs bitwise identical: {identical}")
    return 0 if identical else 1


if __name__ == "__main__":
    sys.exit(main())
