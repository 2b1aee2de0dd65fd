"""Forward evaluation of the composite training loss (no gradients).

Three components: ternary pixel classification (weighted cross-entropy
plus per-class Dice), distance-map regression (masked MAE plus masked
gradient MSE with directional Sobel kernels), and cell-type
classification (mask-weighted cross-entropy plus pixel-wise Tversky).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .postprocess import directional_gradients, sobel_bank

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lam1: float = 2.0  # cross-entropy, ternary head
    lam2: float = 1.0  # Dice, BD class
    lam3: float = 2.0  # Dice, CB class
    lam4: float = 2.0  # masked MAE
    lam5: float = 2.0  # masked gradient MSE
    lam6: float = 5.0  # type head
    tversky_alpha: float = 0.7
    epsilon: float = 1e-6

    def __post_init__(self):
        if not 0.5 < self.tversky_alpha < 1.0:
            raise ValueError("tversky_alpha must lie in (0.5, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def _check_shapes(gt, pred):
    if gt.shape != pred.shape:
        raise ValueError(f"shape mismatch: gt {gt.shape} vs pred {pred.shape}")


def cce(gt: np.ndarray, pred: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """Categorical cross-entropy, optionally weighted by a pixel mask.

    Unweighted: mean over pixels of -sum_k gt*log(pred). With a mask the
    per-pixel terms are scaled by it and the normalizer is the mask sum.
    Predictions are clamped to [1e-7, 1] before the log.
    """
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    _check_shapes(gt, pred)
    logp = np.log(np.clip(pred, PROB_CLAMP, 1.0))
    per_pixel = -(gt * logp).sum(axis=-1)
    if mask is None:
        return float(per_pixel.mean())
    mask = np.asarray(mask, dtype=np.float64)
    denom = mask.sum()
    if denom <= 0:
        raise ValueError("mask sums to zero")
    return float((per_pixel * mask).sum() / denom)


def dice_loss_class(gt: np.ndarray, pred: np.ndarray, k: int,
                    epsilon: float = 1e-6) -> float:
    """Smoothed Dice loss for a single channel k."""
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    _check_shapes(gt, pred)
    if not 0 <= k < gt.shape[-1]:
        raise ValueError(f"channel {k} out of range for {gt.shape[-1]} channels")
    g = gt[..., k]
    p = pred[..., k]
    inter = (g * p).sum()
    return float(1.0 - (2.0 * inter + epsilon) / (g.sum() + p.sum() + epsilon))


def loss_p(gt: np.ndarray, pred: np.ndarray, w: LossWeights = LossWeights()) -> float:
    """Ternary-head loss: lam1*CCE + lam2*Dice(BD) + lam3*Dice(CB)."""
    if gt.shape[-1] != 3 or pred.shape[-1] != 3:
        raise ValueError("ternary-head tensors must have 3 channels (BD, CB, BG)")
    return (
        w.lam1 * cce(gt, pred)
        + w.lam2 * dice_loss_class(gt, pred, 0, w.epsilon)
        + w.lam3 * dice_loss_class(gt, pred, 1, w.epsilon)
    )


def masked_mae(gt: np.ndarray, pred: np.ndarray, mask: np.ndarray) -> float:
    """Mask-weighted mean absolute error over all distance channels.

    The normalizer repeats the mask sum once per channel.
    """
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    _check_shapes(gt, pred)
    mask = np.asarray(mask, dtype=np.float64)
    denom = gt.shape[-1] * mask.sum()
    if denom <= 0:
        raise ValueError("mask sums to zero")
    err = np.abs(gt - pred).sum(axis=-1)
    return float((err * mask).sum() / denom)


def masked_gradient_mse(gt: np.ndarray, pred: np.ndarray, mask: np.ndarray) -> float:
    """Mask-weighted MSE between directional gradients of gt and pred.

    Each channel is filtered with its matching 5x5 directional kernel
    (zero-padded) before the squared difference.
    """
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    _check_shapes(gt, pred)
    mask = np.asarray(mask, dtype=np.float64)
    denom = gt.shape[-1] * mask.sum()
    if denom <= 0:
        raise ValueError("mask sums to zero")
    bank = sobel_bank()
    dg = directional_gradients(gt, bank)
    dp = directional_gradients(pred, bank)
    err = ((dg - dp) ** 2).sum(axis=-1)
    return float((err * mask).sum() / denom)


def loss_r(gt: np.ndarray, pred: np.ndarray, mask: np.ndarray,
           w: LossWeights = LossWeights()) -> float:
    """Regression-head loss: lam4*MAE + lam5*gradient MSE."""
    return w.lam4 * masked_mae(gt, pred, mask) + w.lam5 * masked_gradient_mse(gt, pred, mask)


def tversky_pixelwise(gt: np.ndarray, pred: np.ndarray, alpha: float = 0.7,
                      epsilon: float = 1e-6) -> float:
    """Mean pixel-wise Tversky loss over all pixels and channels."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    _check_shapes(gt, pred)
    tp = gt * pred
    fn = gt * (1.0 - pred)
    fp = (1.0 - gt) * pred
    t = 1.0 - (tp + epsilon) / (tp + alpha * fn + (1.0 - alpha) * fp + epsilon)
    return float(t.mean())


def loss_t(gt: np.ndarray, pred: np.ndarray, mask: np.ndarray,
           w: LossWeights = LossWeights()) -> float:
    """Type-head loss: lam6 * (mask-weighted CCE + pixel-wise Tversky)."""
    return w.lam6 * (cce(gt, pred, mask) + tversky_pixelwise(gt, pred, w.tversky_alpha, w.epsilon))


def total_loss(
    gt_p: np.ndarray, pred_p: np.ndarray,
    gt_r: np.ndarray, pred_r: np.ndarray,
    mask: np.ndarray,
    gt_t: Optional[np.ndarray] = None, pred_t: Optional[np.ndarray] = None,
    w: LossWeights = LossWeights(),
) -> dict:
    """All loss components plus their sum; the type term is optional."""
    parts = {
        "loss_p": loss_p(gt_p, pred_p, w),
        "loss_r": loss_r(gt_r, pred_r, mask, w),
    }
    if gt_t is not None:
        if pred_t is None:
            raise ValueError("gt_t given without pred_t")
        parts["loss_t"] = loss_t(gt_t, pred_t, mask, w)
    parts["total"] = sum(parts.values())
    return parts
