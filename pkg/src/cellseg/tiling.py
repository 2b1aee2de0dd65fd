"""Tiling of large rasters into overlapping patches and smooth blending.

Images are reflect-padded by half a tile on each side (plus whatever is
needed so the stride divides evenly), split into tile-size patches at
50% overlap, and per-tile predictions are blended back with a separable
second-order spline window followed by weight normalization.
"""

from dataclasses import dataclass

import numpy as np

WINDOW_FLOOR = 1e-3


@dataclass(frozen=True)
class TileGrid:
    height: int
    width: int
    tile: int
    stride: int
    pad: int          # reflect pad on top/left (= tile // 2)
    padded_h: int
    padded_w: int
    offsets_r: tuple
    offsets_c: tuple

    @property
    def offsets(self) -> list[tuple[int, int]]:
        return [(r, c) for r in self.offsets_r for c in self.offsets_c]


def plan_tiles(height: int, width: int, tile: int = 256, stride: int | None = None) -> TileGrid:
    """Plan a full tile cover of the reflect-padded image."""
    if stride is None:
        stride = tile // 2
    if tile % 2 != 0:
        raise ValueError("tile size must be even")
    if stride != tile // 2:
        raise ValueError("stride must be tile/2 (50% overlap)")
    pad = tile // 2

    def _extent(n):
        e = n + 2 * pad
        rem = (e - tile) % stride
        if rem:
            e += stride - rem
        return e

    ph, pw = _extent(height), _extent(width)
    offs_r = tuple(range(0, ph - tile + 1, stride))
    offs_c = tuple(range(0, pw - tile + 1, stride))
    return TileGrid(height, width, tile, stride, pad, ph, pw, offs_r, offs_c)


def pad_image(image: np.ndarray, grid: TileGrid) -> np.ndarray:
    """Reflect-pad to the planned extent (extra pad goes bottom/right)."""
    eh = grid.padded_h - grid.height - grid.pad
    ew = grid.padded_w - grid.width - grid.pad
    pads = [(grid.pad, eh), (grid.pad, ew)] + [(0, 0)] * (image.ndim - 2)
    return np.pad(image, pads, mode="reflect")


def extract_tiles(image: np.ndarray, grid: TileGrid) -> list[tuple[tuple[int, int], np.ndarray]]:
    """All planned tiles of the padded image, as (offset, patch) pairs."""
    if image.shape[0] != grid.height or image.shape[1] != grid.width:
        raise ValueError(
            f"image shape {image.shape[:2]} does not match grid "
            f"({grid.height}, {grid.width})"
        )
    padded = pad_image(image, grid)
    t = grid.tile
    return [((r, c), padded[r : r + t, c : c + t].copy()) for r, c in grid.offsets]


def spline_window(tile: int, power: int = 2) -> np.ndarray:
    """Separable second-order spline blend window, floored at 1e-3.

    1-D profile at t=(i+0.5)/tile: 2t^2 below the midpoint, 1-2(1-t)^2
    above; the 2-D window is the outer product.
    """
    if tile % 2 != 0:
        raise ValueError("tile size must be even")
    if power != 2:
        raise ValueError("only the second-order spline window is supported")
    t = (np.arange(tile) + 0.5) / tile
    s = np.where(t < 0.5, 2.0 * t**2, 1.0 - 2.0 * (1.0 - t) ** 2)
    s = np.maximum(s, WINDOW_FLOOR)
    return np.outer(s, s)


def blend_untile(
    tiles: list[tuple[tuple[int, int], np.ndarray]],
    grid: TileGrid,
    window: np.ndarray | None = None,
) -> np.ndarray:
    """Blend per-tile predictions back into a full-size raster.

    Accumulates window-weighted tiles and divides by the accumulated
    weight, then crops the padding off. Every planned offset must be
    present exactly once.
    """
    if window is None:
        window = spline_window(grid.tile)
    got = {tuple(off) for off, _ in tiles}
    want = set(grid.offsets)
    if got != want:
        missing = sorted(want - got)
        extra = sorted(got - want)
        raise ValueError(f"tile set mismatch: missing {missing[:4]}, unexpected {extra[:4]}")

    first = tiles[0][1]
    channels = first.shape[2] if first.ndim == 3 else 1
    acc = np.zeros((grid.padded_h, grid.padded_w, channels), dtype=np.float64)
    wacc = np.zeros((grid.padded_h, grid.padded_w), dtype=np.float64)
    t = grid.tile
    for (r, c), patch in tiles:
        p = np.asarray(patch, dtype=np.float64)
        if p.ndim == 2:
            p = p[:, :, None]
        if p.shape != (t, t, channels):
            raise ValueError(f"tile at {(r, c)} has shape {patch.shape}, expected ({t},{t},{channels})")
        acc[r : r + t, c : c + t] += p * window[:, :, None]
        wacc[r : r + t, c : c + t] += window
    out = acc / wacc[:, :, None]
    out = out[grid.pad : grid.pad + grid.height, grid.pad : grid.pad + grid.width]
    return out[:, :, 0] if first.ndim == 2 else out
