"""Training-target encoding from an annotated label map.

Produces the three targets used by the segmentation heads: a ternary
pixel-class map (boundary / cell body / background), four signed
per-instance-normalized directional distance maps, and the loss weight
mask that up-weights pixels in and around cell bodies.
"""

from dataclasses import dataclass

import numpy as np

from .grid import MagProfile, connected_components, dilate, instance_centroids

# ternary codes
BD = 1  # boundary between closely positioned cells
CB = 2  # cell body
BG = 3  # background

SQRT2 = np.sqrt(2.0)

#: default area below which residual ternary components are reassigned
CLEANUP_MIN_AREA = 4


def ternary_from_labels(
    labels: np.ndarray,
    profile: MagProfile,
    cleanup_min_area: int = CLEANUP_MIN_AREA,
) -> np.ndarray:
    """Ternary BD/CB/BG map from an instance label map.

    Dilations of every instance mask are accumulated into an overlap
    count; pixels covered more than once mark the gaps between close
    cells. That set is expanded by two further dilations, intersected
    with the instances to give BD; remaining instance pixels are CB and
    everything else BG. Small residual components are reassigned
    (BD -> CB first, then CB -> BG).
    """
    labels = np.asarray(labels)
    overlap = np.zeros(labels.shape, dtype=np.int32)
    ids = np.unique(labels)
    ids = ids[ids > 0]
    for i in ids:
        overlap += dilate(labels == i, profile.gt_dilate).astype(np.int32)

    between = overlap > 1
    between = dilate(dilate(between, profile.gt_dilate), profile.gt_dilate)

    fg = labels > 0
    out = np.full(labels.shape, BG, dtype=np.int32)
    out[fg] = CB
    out[between & fg] = BD

    # residual-component cleanup, foreground-preserving order
    if cleanup_min_area > 1:
        _reassign_small(out, BD, CB, cleanup_min_area)
        _reassign_small(out, CB, BG, cleanup_min_area)
    return out


def _reassign_small(ternary: np.ndarray, code: int, fallback: int, min_area: int) -> None:
    comps = connected_components(ternary == code)
    if comps.max() == 0:
        return
    areas = np.bincount(comps.ravel())
    small = np.flatnonzero(areas[1:] < min_area) + 1
    if small.size:
        ternary[np.isin(comps, small)] = fallback


def distance_maps_from_labels(labels: np.ndarray) -> np.ndarray:
    """Four directional distance maps, (H, W, 4) float32 in [-1, 1].

    Channel order: vertical, horizontal, diagonal TL->BR, diagonal
    BL->TR. Each pixel's raw value is the signed distance from the line
    through its instance's centroid orthogonal to the channel direction;
    each channel is normalized per instance (positive side by its max,
    negative side by its min magnitude) so values span [-1, 1].
    Background is 0.
    """
    labels = np.asarray(labels)
    h, w = labels.shape
    out = np.zeros((h, w, 4), dtype=np.float32)
    rows, cols = np.indices(labels.shape)
    for cen in instance_centroids(labels):
        m = labels == cen.id
        dr = rows[m] - cen.row
        dc = cols[m] - cen.col
        raw = np.stack([dr, dc, (dr + dc) / SQRT2, (dc - dr) / SQRT2], axis=1)
        # sides normalized separately so both +1 and -1 are attained
        # whenever the instance has extent along the direction
        for k in range(4):
            col = raw[:, k]
            mx = col.max()
            mn = col.min()
            if mx <= 0.0 and mn >= 0.0:
                col[:] = 0.0
                continue
            col[col > 0] /= mx
            col[col < 0] /= -mn
        out[m] = raw.astype(np.float32)
    return out


def weight_mask(ternary: np.ndarray, profile: MagProfile) -> np.ndarray:
    """Loss weight mask: 1.0 on the dilated foreground, 0.05 elsewhere."""
    fg = (ternary == BD) | (ternary == CB)
    inside = dilate(fg, profile.post_dilate)
    return np.where(inside, 1.0, 0.05).astype(np.float32)


def one_hot(values: np.ndarray, channels: int) -> np.ndarray:
    """One-hot encode an (H, W) map of 0-based codes into (H, W, channels)."""
    values = np.asarray(values)
    if values.min() < 0 or values.max() >= channels:
        raise ValueError(
            f"codes out of range: found [{values.min()}, {values.max()}] "
            f"for {channels} channels"
        )
    return np.eye(channels, dtype=np.float32)[values]


def ternary_to_onehot(ternary: np.ndarray) -> np.ndarray:
    """One-hot the ternary map with channel order (BD, CB, BG)."""
    t = np.asarray(ternary)
    if not np.isin(t, (BD, CB, BG)).all():
        raise ValueError("ternary map must contain only codes {1,2,3}")
    return one_hot(t - 1, 3)


@dataclass(frozen=True)
class EncodedTargets:
    ternary: np.ndarray
    onehot: np.ndarray
    distances: np.ndarray
    mask: np.ndarray


def encode_all(labels: np.ndarray, profile: MagProfile,
               cleanup_min_area: int = CLEANUP_MIN_AREA) -> EncodedTargets:
    """Run the full encoding for one label map."""
    ternary = ternary_from_labels(labels, profile, cleanup_min_area)
    return EncodedTargets(
        ternary=ternary,
        onehot=ternary_to_onehot(ternary),
        distances=distance_maps_from_labels(labels),
        mask=weight_mask(ternary, profile),
    )
