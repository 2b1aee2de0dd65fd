"""Head outputs -> instance label map (+ per-instance cell types).

Pipeline: edge mask from distance-map gradients, CB-derived markers,
marker-controlled watershed on a topographic map, small-instance
removal, then majority-vote typing.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numba import njit
from scipy import ndimage

from .grid import MagProfile, PROFILE_20X, connected_components, relabel_sequential


def sobel_bank() -> np.ndarray:
    """Four 5x5 derivative kernels, one per distance-map direction.

    Order matches the distance channels: vertical, horizontal, diagonal
    TL->BR, diagonal BL->TR. The horizontal kernel is the outer product
    of the smoothing tap [1,4,6,4,1] with the derivative tap
    [-1,-2,0,2,1]; vertical is its transpose; diagonals are the half-sum
    and half-difference.
    """
    smooth = np.array([1.0, 4.0, 6.0, 4.0, 1.0])
    deriv = np.array([-1.0, -2.0, 0.0, 2.0, 1.0])
    sx = np.outer(smooth, deriv)  # d/d(col)
    sy = sx.T                     # d/d(row)
    d1 = (sx + sy) / 2.0          # d/d(TL->BR)
    d2 = (sx - sy) / 2.0          # d/d(BL->TR)
    return np.stack([sy, sx, d1, d2])


def _minmax01(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi <= lo:
        return np.zeros_like(x, dtype=np.float64)
    return (x - lo) / (hi - lo)


def directional_gradients(dist: np.ndarray, bank: np.ndarray) -> np.ndarray:
    """Convolve each channel with its matching kernel (zero-padded).

    True convolution (kernel flipped): the derivative kernels are
    antisymmetric, so the sharp descending ramp reset between adjacent
    instances comes out as the most positive response.
    """
    out = np.empty(dist.shape, dtype=np.float64)
    for k in range(dist.shape[2]):
        out[:, :, k] = ndimage.convolve(
            dist[:, :, k].astype(np.float64), bank[k], mode="constant", cval=0.0
        )
    return out


def edge_mask(dist: np.ndarray, bank: np.ndarray, theta1: float) -> np.ndarray:
    """Binary edge mask from the max of normalized directional gradients.

    Each distance channel is min-max normalized to [0,1] over the image,
    convolved with its kernel, and the response itself min-max
    normalized; a pixel is an edge when the max over the four responses
    strictly exceeds theta1.
    """
    resp = np.zeros(dist.shape, dtype=np.float64)
    for k in range(dist.shape[2]):
        chan = _minmax01(dist[:, :, k].astype(np.float64))
        r = ndimage.convolve(chan, bank[k], mode="constant", cval=0.0)
        resp[:, :, k] = _minmax01(r)
    return resp.max(axis=2) > theta1


@njit(cache=True)
def _flood(topo, markers, fg):  # pragma: no cover - exercised via watershed()
    h, w = topo.shape
    n = h * w
    labels = markers.copy()
    cap = 8 * n + 16
    hkey = np.empty(cap, dtype=np.float64)
    hidx = np.empty(cap, dtype=np.int64)
    size = 0

    # seed the (inlined binary) heap with fg neighbors of the markers
    for p in range(n):
        r = p // w
        c = p % w
        if labels[r, c] > 0:
            for dr in range(-1, 2):
                for dc in range(-1, 2):
                    rr = r + dr
                    cc = c + dc
                    if 0 <= rr < h and 0 <= cc < w and fg[rr, cc] and labels[rr, cc] == 0:
                        q = rr * w + cc
                        hkey[size] = topo[rr, cc]
                        hidx[size] = q
                        i = size
                        size += 1
                        while i > 0:
                            par = (i - 1) // 2
                            if hkey[i] < hkey[par] or (hkey[i] == hkey[par] and hidx[i] < hidx[par]):
                                hkey[i], hkey[par] = hkey[par], hkey[i]
                                hidx[i], hidx[par] = hidx[par], hidx[i]
                                i = par
                            else:
                                break

    while size > 0:
        key = hkey[0]
        p = hidx[0]
        size -= 1
        hkey[0] = hkey[size]
        hidx[0] = hidx[size]
        i = 0
        while True:
            l = 2 * i + 1
            rgt = 2 * i + 2
            m = i
            if l < size and (hkey[l] < hkey[m] or (hkey[l] == hkey[m] and hidx[l] < hidx[m])):
                m = l
            if rgt < size and (hkey[rgt] < hkey[m] or (hkey[rgt] == hkey[m] and hidx[rgt] < hidx[m])):
                m = rgt
            if m == i:
                break
            hkey[i], hkey[m] = hkey[m], hkey[i]
            hidx[i], hidx[m] = hidx[m], hidx[i]
            i = m

        r = p // w
        c = p % w
        if labels[r, c] > 0:
            continue
        # label from the already-labeled neighbor with the smallest raster index
        lab = 0
        for dr in range(-1, 2):
            for dc in range(-1, 2):
                rr = r + dr
                cc = c + dc
                if 0 <= rr < h and 0 <= cc < w and labels[rr, cc] > 0:
                    lab = labels[rr, cc]
                    break
            if lab > 0:
                break
        if lab == 0:
            continue
        labels[r, c] = lab
        for dr in range(-1, 2):
            for dc in range(-1, 2):
                rr = r + dr
                cc = c + dc
                if 0 <= rr < h and 0 <= cc < w and fg[rr, cc] and labels[rr, cc] == 0:
                    hkey[size] = topo[rr, cc]
                    hidx[size] = rr * w + cc
                    i = size
                    size += 1
                    while i > 0:
                        par = (i - 1) // 2
                        if hkey[i] < hkey[par] or (hkey[i] == hkey[par] and hidx[i] < hidx[par]):
                            hkey[i], hkey[par] = hkey[par], hkey[i]
                            hidx[i], hidx[par] = hidx[par], hidx[i]
                            i = par
                        else:
                            break
    return labels


def watershed(topo: np.ndarray, markers: np.ndarray, fg: np.ndarray) -> np.ndarray:
    """Marker-controlled watershed restricted to the foreground mask.

    Deterministic priority flood: pixels dequeue by (topo value, raster
    index); each new pixel takes the label of its labeled 8-neighbor
    with the smallest raster index. Pixels outside fg (or unreachable
    from any marker within fg) stay 0.
    """
    topo = np.ascontiguousarray(topo, dtype=np.float64)
    markers = np.ascontiguousarray(markers, dtype=np.int32)
    fg = np.ascontiguousarray(fg, dtype=bool)
    if topo.shape != markers.shape or topo.shape != fg.shape:
        raise ValueError("topo/markers/fg shapes differ")
    labels = _flood(topo, markers, fg)
    labels[~fg] = 0
    return labels


@dataclass(frozen=True)
class PostprocessConfig:
    theta1: float = 0.57
    theta2: Optional[int] = None  # None -> profile.min_instance_area
    profile: MagProfile = PROFILE_20X

    def __post_init__(self):
        if not 0.0 < self.theta1 < 1.0:
            raise ValueError("theta1 must be in (0, 1)")

    @property
    def min_area(self) -> int:
        return self.profile.min_instance_area if self.theta2 is None else self.theta2


class InstanceType(NamedTuple):
    instance_id: int
    type_id: int
    vote_fraction: float


def postprocess(
    prob: np.ndarray,
    dist: np.ndarray,
    type_prob: Optional[np.ndarray] = None,
    cfg: PostprocessConfig = PostprocessConfig(),
) -> tuple[np.ndarray, Optional[list[InstanceType]]]:
    """Full post-processing: probabilities + distance maps -> label map.

    prob is (H, W, 3) with channel order (BD, CB, BG); dist is (H, W, 4);
    type_prob, when given, is (H, W, T) with channel 0 = background type.
    """
    prob = np.asarray(prob, dtype=np.float64)
    dist = np.asarray(dist, dtype=np.float64)
    if prob.ndim != 3 or prob.shape[2] != 3:
        raise ValueError(f"prob must be (H, W, 3), got {prob.shape}")
    if dist.shape[:2] != prob.shape[:2] or dist.ndim != 3 or dist.shape[2] != 4:
        raise ValueError(f"dist must be (H, W, 4) matching prob, got {dist.shape}")
    if type_prob is not None and type_prob.shape[:2] != prob.shape[:2]:
        raise ValueError("type_prob shape does not match prob")

    p_bd, p_cb, p_bg = prob[:, :, 0], prob[:, :, 1], prob[:, :, 2]
    fg = (p_bd + p_cb) > p_bg
    edges = edge_mask(dist, sobel_bank(), cfg.theta1)

    marker_mask = (p_cb > p_bd) & (p_cb > p_bg) & ~edges
    markers = connected_components(marker_mask)

    topo = (1.0 - p_cb) + (1.0 - fg * (1.0 - edges))
    labels = watershed(topo, markers, fg) if markers.max() > 0 else np.zeros_like(markers)

    if labels.max() > 0 and cfg.min_area > 0:
        areas = np.bincount(labels.ravel())
        small = np.flatnonzero(areas[1:] < cfg.min_area) + 1
        if small.size:
            labels[np.isin(labels, small)] = 0
    labels = relabel_sequential(labels)

    if type_prob is None:
        return labels, None
    return labels, vote_types(labels, np.asarray(type_prob, dtype=np.float64))


def vote_types(labels: np.ndarray, type_prob: np.ndarray) -> list[InstanceType]:
    """Majority-vote cell type per instance.

    The vote runs over pixels whose argmax type is not the background
    channel (0); ties pick the lower type id. If every pixel of an
    instance argmaxes to background, the instance gets the non-background
    type with highest mean probability (vote fraction 1.0 by convention).
    """
    t = type_prob.shape[2]
    arg = type_prob.argmax(axis=2)
    out = []
    for i in np.unique(labels):
        if i == 0:
            continue
        m = labels == i
        votes = np.bincount(arg[m], minlength=t)
        votes[0] = 0
        total = votes.sum()
        if total > 0:
            type_id = int(votes.argmax())
            frac = float(votes[type_id] / total)
        else:
            mean_prob = type_prob[m].mean(axis=0)
            mean_prob[0] = -np.inf
            type_id = int(mean_prob.argmax())
            frac = 1.0
        out.append(InstanceType(int(i), type_id, frac))
    return out
