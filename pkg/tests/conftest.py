import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_blob_labels(rng, shape=(64, 64), n_blobs=4, radius=(5, 8), min_gap=0):
    """Non-overlapping disk instances; returns an int32 label map."""
    h, w = shape
    labels = np.zeros(shape, dtype=np.int32)
    centers = []
    nxt = 1
    attempts = 0
    while nxt <= n_blobs and attempts < 500:
        attempts += 1
        rad = int(rng.integers(radius[0], radius[1] + 1))
        r0 = int(rng.integers(rad, h - rad))
        c0 = int(rng.integers(rad, w - rad))
        if any(np.hypot(r0 - r, c0 - c) < rad + rr + min_gap for r, c, rr in centers):
            continue
        yy, xx = np.ogrid[:h, :w]
        labels[(yy - r0) ** 2 + (xx - c0) ** 2 <= rad * rad] = nxt
        centers.append((r0, c0, rad))
        nxt += 1
    return labels
