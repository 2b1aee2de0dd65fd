"""Dense 2-D raster primitives shared by the rest of the package.

Everything here is a pure function over numpy arrays. Label maps are
integer arrays with 0 = background and positive ids naming instances.
Connectivity is 8-connected throughout the package.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage

# 8-connectivity structure for component labeling / flooding
STRUCT_8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class StructuringElement:
    """Morphological footprint: a disk or square of a given radius."""

    shape: str = "disk"
    radius: int = 1

    def __post_init__(self):
        if self.shape not in ("disk", "square"):
            raise ValueError(f"unknown structuring element shape: {self.shape!r}")
        if self.radius < 1:
            raise ValueError("structuring element radius must be >= 1")

    def footprint(self) -> np.ndarray:
        r = self.radius
        if self.shape == "square":
            return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        return (yy * yy + xx * xx) <= r * r


@dataclass(frozen=True)
class MagProfile:
    """Magnification-dependent knobs (structuring elements, match radius, area floor)."""

    magnification: str
    match_radius: int
    gt_dilate: StructuringElement
    post_dilate: StructuringElement
    min_instance_area: int

    def __post_init__(self):
        if self.magnification not in ("20x", "40x"):
            raise ValueError(f"unknown magnification: {self.magnification!r}")


PROFILE_20X = MagProfile(
    magnification="20x",
    match_radius=6,
    gt_dilate=StructuringElement("disk", 1),
    post_dilate=StructuringElement("disk", 1),
    min_instance_area=10,
)

PROFILE_40X = MagProfile(
    magnification="40x",
    match_radius=12,
    gt_dilate=StructuringElement("disk", 2),
    post_dilate=StructuringElement("disk", 2),
    min_instance_area=30,
)


def mag_profile(magnification: str) -> MagProfile:
    if magnification == "20x":
        return PROFILE_20X
    if magnification == "40x":
        return PROFILE_40X
    raise ValueError(f"unknown magnification: {magnification!r} (expected '20x' or '40x')")


class Centroid(NamedTuple):
    id: int
    row: float
    col: float
    area: int


def connected_components(mask: np.ndarray) -> np.ndarray:
    """8-connected components of a binary mask.

    Ids are consecutive from 1 in raster-scan order of each component's
    first pixel; background stays 0.
    """
    mask = np.asarray(mask)
    labels, _ = ndimage.label(mask != 0, structure=STRUCT_8)
    return labels.astype(np.int32)


def dilate(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Binary dilation; the element is clipped at the grid border."""
    mask = np.asarray(mask) != 0
    return ndimage.binary_dilation(mask, structure=se.footprint())


def instance_centroids(labels: np.ndarray) -> list[Centroid]:
    """Per-instance unweighted centroid and pixel area, ids ascending."""
    labels = np.asarray(labels)
    ids = np.unique(labels)
    ids = ids[ids > 0]
    if ids.size == 0:
        return []
    n = int(ids.max()) + 1
    flat = labels.ravel()
    areas = np.bincount(flat, minlength=n)
    rows, cols = np.indices(labels.shape)
    rsum = np.bincount(flat, weights=rows.ravel(), minlength=n)
    csum = np.bincount(flat, weights=cols.ravel(), minlength=n)
    return [
        Centroid(int(i), rsum[i] / areas[i], csum[i] / areas[i], int(areas[i]))
        for i in ids
    ]


def relabel_sequential(labels: np.ndarray) -> np.ndarray:
    """Remap positive ids to 1..n in raster order of each instance's first pixel."""
    labels = np.asarray(labels)
    out = np.zeros_like(labels, dtype=np.int32)
    flat = labels.ravel()
    seen = {}
    nxt = 1
    order = np.flatnonzero(flat)
    for k in order:
        v = flat[k]
        if v not in seen:
            seen[v] = nxt
            nxt += 1
    lut = np.zeros(int(labels.max()) + 1, dtype=np.int32)
    for v, nv in seen.items():
        lut[v] = nv
    out = lut[labels]
    return out
