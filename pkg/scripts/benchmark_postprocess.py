"""Timing harness for the post-processing stage.

Builds a clean grid-of-disks probability/distance pair at the given size
and reports wall time for the full postprocess() call (after one warm-up
run so JIT compilation is excluded).

Usage: python scripts/benchmark_postprocess.py [--side 1024] [--repeats 3]
"""

import argparse
import time

import numpy as np
from scipy import ndimage

from cellseg.postprocess import PostprocessConfig, postprocess


def make_inputs(side, spacing=42, radius=9):
    labels = np.zeros((side, side), dtype=np.int32)
    yy, xx = np.ogrid[:side, :side]
    nxt = 1
    for r0 in range(spacing // 2, side, spacing):
        for c0 in range(spacing // 2, side, spacing):
            labels[(yy - r0) ** 2 + (xx - c0) ** 2 <= radius * radius] = nxt
            nxt += 1
    fg = labels > 0
    interior = ndimage.binary_erosion(fg, iterations=2)
    prob = np.zeros((side, side, 3))
    prob[:, :, 0] = fg & ~interior
    prob[:, :, 1] = interior
    prob[:, :, 2] = ~fg
    dist = np.zeros((side, side, 4))
    dist[:, :, 0] = np.linspace(-1, 1, side)[:, None]
    dist[:, :, 1] = np.linspace(-1, 1, side)[None, :]
    return prob, dist


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--side", type=int, default=1024)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    cfg = PostprocessConfig()
    wp, wd = make_inputs(64, spacing=24, radius=6)
    postprocess(wp, wd, None, cfg)  # warm-up (JIT compile / cache load)

    prob, dist = make_inputs(args.side)
    for i in range(args.repeats):
        t0 = time.perf_counter()
        inst, _ = postprocess(prob, dist, None, cfg)
        dt = time.perf_counter() - t0
        print(f"run {i}: {args.side}x{args.side}, {inst.max()} instances, {dt:.3f}s")


if __name__ == "__main__":
    main()
