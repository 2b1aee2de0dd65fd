"""Stain normalization and augmentation transforms.

Three augmentation strategies: (a) random LAB stain styles sampled from
Gaussians fitted over template statistics, (b) photometric jitter, and
(c) normalization toward a fixed template via Reinhard, Ruifrok color
deconvolution, or Macenko.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from skimage import color

OD_EPS = 1.0  # +1 before the log keeps OD finite at intensity 0

# standard published H&E optical-density vectors (columns), user-overridable
HE_MATRIX = np.array(
    [
        [0.65, 0.07],
        [0.70, 0.99],
        [0.29, 0.11],
    ]
)
HE_MATRIX = HE_MATRIX / np.linalg.norm(HE_MATRIX, axis=0, keepdims=True)


@dataclass(frozen=True)
class LabStats:
    mean: tuple  # (L, a, b)
    std: tuple

    def __post_init__(self):
        if any(s < 0 for s in self.std):
            raise ValueError("standard deviations must be non-negative")


def rgb_to_lab(image: np.ndarray) -> np.ndarray:
    """uint8 RGB -> D65 CIE-LAB float."""
    return color.rgb2lab(np.asarray(image, dtype=np.uint8))


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    """CIE-LAB -> uint8 RGB, clipped to gamut."""
    rgb = color.lab2rgb(lab)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def lab_stats(image: np.ndarray) -> LabStats:
    lab = rgb_to_lab(image)
    return LabStats(
        mean=tuple(float(x) for x in lab.reshape(-1, 3).mean(axis=0)),
        std=tuple(float(x) for x in lab.reshape(-1, 3).std(axis=0)),
    )


def apply_style(image: np.ndarray, target: LabStats) -> np.ndarray:
    """Shift/scale each LAB channel to the target statistics."""
    lab = rgb_to_lab(image)
    src = lab_stats(image)
    out = np.empty_like(lab)
    for k in range(3):
        if src.std[k] < 1e-6:
            out[:, :, k] = lab[:, :, k] - src.mean[k] + target.mean[k]
        else:
            out[:, :, k] = (lab[:, :, k] - src.mean[k]) / src.std[k] * target.std[k] + target.mean[k]
    return lab_to_rgb(out)


# Reinhard normalization is the same affine LAB mapping with a fixed
# template-derived target.
reinhard_normalize = apply_style


@dataclass(frozen=True)
class StainStyleModel:
    """Gaussians over per-channel LAB means and stds across templates."""

    mean_mu: tuple
    mean_sigma: tuple
    std_mu: tuple
    std_sigma: tuple

    @classmethod
    def fit(cls, stats: list) -> "StainStyleModel":
        if len(stats) < 2:
            raise ValueError("need at least 2 template stats to fit a style model")
        means = np.array([s.mean for s in stats])
        stds = np.array([s.std for s in stats])
        return cls(
            mean_mu=tuple(means.mean(axis=0)),
            mean_sigma=tuple(means.std(axis=0)),
            std_mu=tuple(stds.mean(axis=0)),
            std_sigma=tuple(stds.std(axis=0)),
        )


def sample_style(model: StainStyleModel, seed) -> LabStats:
    """Independent Gaussian draws per parameter; negative stds clamp to 0."""
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    mean = rng.normal(model.mean_mu, model.mean_sigma)
    std = np.maximum(rng.normal(model.std_mu, model.std_sigma), 0.0)
    return LabStats(tuple(float(x) for x in mean), tuple(float(x) for x in std))


def jitter(image: np.ndarray, brightness: float = 0.0, contrast: float = 1.0,
           saturation: float = 1.0) -> np.ndarray:
    """Brightness (additive), contrast (scale about the image mean),
    saturation (blend with per-pixel luma); clamped to [0, 255]."""
    img = np.asarray(image, dtype=np.float64)
    mean = img.mean()
    img = (img - mean) * contrast + mean
    luma = img @ np.array([0.299, 0.587, 0.114])
    img = luma[:, :, None] + (img - luma[:, :, None]) * saturation
    img = img + brightness
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def rgb_to_od(image: np.ndarray) -> np.ndarray:
    """Optical density: -log10((I + 1) / 256) per channel."""
    return -np.log10((np.asarray(image, dtype=np.float64) + OD_EPS) / 256.0)


def od_to_rgb(od: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(256.0 * np.power(10.0, -od) - OD_EPS), 0, 255).astype(np.uint8)


def ruifrok_deconvolve(image: np.ndarray, matrix: np.ndarray = HE_MATRIX) -> np.ndarray:
    """Stain concentrations via pseudo-inverse color deconvolution.

    Returns (H, W, n_stains) for a (3, n_stains) stain matrix.
    """
    od = rgb_to_od(image).reshape(-1, 3)
    conc = od @ np.linalg.pinv(matrix).T
    return conc.reshape(image.shape[0], image.shape[1], matrix.shape[1])


def ruifrok_recompose(conc: np.ndarray, matrix: np.ndarray = HE_MATRIX) -> np.ndarray:
    od = conc.reshape(-1, matrix.shape[1]) @ matrix.T
    return od_to_rgb(od.reshape(conc.shape[0], conc.shape[1], 3))


def macenko_estimate(
    image: np.ndarray,
    angle_percentiles: tuple = (1.0, 99.0),
    od_threshold: float = 0.15,
    min_pixels: int = 100,
) -> np.ndarray:
    """Estimate the 2-column stain matrix from the OD pixel cloud.

    Keeps pixels above the OD threshold in every channel, takes the top-2
    principal directions, and picks robust extreme angles of the
    projected cloud. Columns are unit, non-negative, hematoxylin-like
    first (larger red OD coordinate).
    """
    od = rgb_to_od(image).reshape(-1, 3)
    keep = od[(od > od_threshold).all(axis=1)]
    if keep.shape[0] < min_pixels:
        raise ValueError(
            f"insufficient stain signal: {keep.shape[0]} pixels above OD {od_threshold}"
        )
    _, _, vt = np.linalg.svd(keep - keep.mean(axis=0), full_matrices=False)
    basis = vt[:2].T  # (3, 2)
    # orient the first axis toward the cloud mean so the angle
    # distribution is contiguous (no arctan2 branch cut inside the cloud)
    if keep.mean(axis=0) @ basis[:, 0] < 0:
        basis[:, 0] = -basis[:, 0]
    proj = keep @ basis
    ang = np.arctan2(proj[:, 1], proj[:, 0])
    lo, hi = np.percentile(ang, angle_percentiles)
    v1 = basis @ np.array([np.cos(lo), np.sin(lo)])
    v2 = basis @ np.array([np.cos(hi), np.sin(hi)])
    vecs = []
    for v in (v1, v2):
        if v.sum() < 0:
            v = -v
        v = np.clip(v, 0.0, None)
        vecs.append(v / np.linalg.norm(v))
    # hematoxylin-like first: larger first (red) coordinate
    vecs.sort(key=lambda v: -v[0])
    return np.stack(vecs, axis=1)


def macenko_normalize(
    image: np.ndarray,
    source: np.ndarray,
    target: np.ndarray,
    target_maxc: Optional[np.ndarray] = None,
    percentile: float = 99.0,
) -> np.ndarray:
    """Deconvolve with the source matrix, rescale concentrations so the
    99th percentile matches the target reference, recompose with the
    target matrix. With target_maxc=None the image's own percentiles are
    used (identity when source == target)."""
    conc = ruifrok_deconvolve(image, source)
    maxc = np.percentile(conc.reshape(-1, conc.shape[2]), percentile, axis=0)
    if target_maxc is not None:
        scale = np.where(maxc > 1e-8, np.asarray(target_maxc, dtype=np.float64) / maxc, 1.0)
        conc = conc * scale[None, None, :]
    return ruifrok_recompose(conc, target)


@dataclass
class AugmentPolicy:
    """What the random augmentation can pick from.

    strategies is any subset of {"style", "jitter", "normalize"};
    templates are uint8 RGB images for strategy (c).
    """

    strategies: tuple = ("style", "jitter", "normalize")
    style_model: Optional[StainStyleModel] = None
    templates: list = field(default_factory=list)
    normalize_methods: tuple = ("reinhard", "ruifrok", "macenko")
    brightness_range: tuple = (-26.0, 26.0)
    contrast_range: tuple = (0.75, 1.25)
    saturation_range: tuple = (0.75, 1.25)

    def __post_init__(self):
        bad = set(self.strategies) - {"style", "jitter", "normalize"}
        if bad:
            raise ValueError(f"unknown strategies: {sorted(bad)}")
        if "style" in self.strategies and self.style_model is None:
            raise ValueError("strategy 'style' requires a style_model")
        if "normalize" in self.strategies and not self.templates:
            raise ValueError("strategy 'normalize' requires templates")


def select_strategy(policy: AugmentPolicy, rng: np.random.Generator) -> str:
    """Uniform draw over the policy's strategies (first draw of augment)."""
    return policy.strategies[rng.integers(len(policy.strategies))]


def augment(image: np.ndarray, policy: AugmentPolicy, seed: int) -> np.ndarray:
    """Apply one uniformly chosen augmentation strategy, seed-determined."""
    rng = np.random.default_rng(seed)
    strategy = select_strategy(policy, rng)
    if strategy == "style":
        return apply_style(image, sample_style(policy.style_model, rng))
    if strategy == "jitter":
        return jitter(
            image,
            brightness=rng.uniform(*policy.brightness_range),
            contrast=rng.uniform(*policy.contrast_range),
            saturation=rng.uniform(*policy.saturation_range),
        )
    template = policy.templates[rng.integers(len(policy.templates))]
    method = policy.normalize_methods[rng.integers(len(policy.normalize_methods))]
    if method == "reinhard":
        return reinhard_normalize(image, lab_stats(template))
    if method == "ruifrok":
        # recompose the image's own concentrations with the template's
        # estimated stain matrix
        conc = ruifrok_deconvolve(image, HE_MATRIX)
        return ruifrok_recompose(conc, macenko_estimate(template))
    src = macenko_estimate(image)
    tgt = macenko_estimate(template)
    tgt_conc = ruifrok_deconvolve(template, tgt)
    tgt_maxc = np.percentile(tgt_conc.reshape(-1, 2), 99.0, axis=0)
    return macenko_normalize(image, src, tgt, tgt_maxc)
