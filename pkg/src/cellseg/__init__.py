"""Cell instance segmentation toolkit.

Deterministic pipeline pieces around an (external) segmentation model:
ground-truth encoding, loss forward evaluation, watershed
post-processing, WSI tiling/blending, oversampling plans, stain
transforms, and the panoptic evaluation suite.
"""

from .grid import (
    MagProfile,
    PROFILE_20X,
    PROFILE_40X,
    StructuringElement,
    connected_components,
    dilate,
    instance_centroids,
    mag_profile,
)
from .postprocess import PostprocessConfig, sobel_bank, watershed
from .losses import LossWeights, total_loss

__all__ = [
    "MagProfile",
    "PROFILE_20X",
    "PROFILE_40X",
    "StructuringElement",
    "connected_components",
    "dilate",
    "instance_centroids",
    "mag_profile",
    "PostprocessConfig",
    "sobel_bank",
    "watershed",
    "LossWeights",
    "total_loss",
]
