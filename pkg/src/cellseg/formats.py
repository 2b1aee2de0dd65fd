"""File formats: 16-bit PNG label maps, 8-bit PNG masks, raw f32 tensors.

Raw tensors are little-endian float32, row-major, channel-last, with a
JSON sidecar ``<path>.json`` holding shape/dtype/order.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image


def save_label_png(labels: np.ndarray, path) -> None:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 65535:
        raise ValueError("label ids must fit in uint16 (0..65535)")
    Image.fromarray(labels.astype(np.uint16)).save(path)


def load_label_png(path) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected single-channel label PNG, got shape {arr.shape}")
    return arr.astype(np.int32)


def save_mask_png(mask: np.ndarray, path) -> None:
    mask = (np.asarray(mask) != 0).astype(np.uint8) * 255
    Image.fromarray(mask).save(path)


def load_mask_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path))
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected single-channel mask PNG, got shape {arr.shape}")
    return arr > 0


def save_ternary_png(ternary: np.ndarray, path) -> None:
    t = np.asarray(ternary)
    if not np.isin(t, (1, 2, 3)).all():
        raise ValueError("ternary map must contain only codes {1,2,3}")
    Image.fromarray(t.astype(np.uint8)).save(path)


def load_ternary_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path)).astype(np.int32)
    if not np.isin(arr, (1, 2, 3)).all():
        raise ValueError(f"{path}: ternary PNG must contain only codes {{1,2,3}}")
    return arr


def save_f32(tensor: np.ndarray, path) -> None:
    """Write raw little-endian float32 plus a JSON sidecar."""
    tensor = np.ascontiguousarray(tensor, dtype="<f4")
    path = Path(path)
    tensor.tofile(path)
    sidecar = {
        "shape": list(tensor.shape),
        "dtype": "f32",
        "order": "row-major-channel-last",
    }
    with open(path.with_suffix(path.suffix + ".json"), "w") as f:
        json.dump(sidecar, f)


def load_f32(path) -> np.ndarray:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    try:
        with open(sidecar_path) as f:
            sidecar = json.load(f)
    except json.JSONDecodeError as e:
        raise ValueError(f"{sidecar_path}: malformed sidecar JSON: {e}") from e
    if sidecar.get("dtype") != "f32":
        raise ValueError(f"{sidecar_path}: unsupported dtype {sidecar.get('dtype')!r}")
    shape = tuple(sidecar["shape"])
    data = np.fromfile(path, dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise ValueError(
            f"{path}: expected {int(np.prod(shape))} floats for shape {shape}, got {data.size}"
        )
    return data.reshape(shape)


def load_image(path) -> np.ndarray:
    """Load an RGB or grayscale image as uint8."""
    return np.asarray(Image.open(path).convert("RGB"))


def save_image(image: np.ndarray, path) -> None:
    Image.fromarray(np.clip(image, 0, 255).astype(np.uint8)).save(path)
