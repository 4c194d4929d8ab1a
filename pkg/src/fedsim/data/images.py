"""Pixel-level transforms on float32 (H, W, 3) images with values in [0, 1]."""
from __future__ import annotations

import numpy as np

from ..errors import DataError


def _bilinear_sample(image: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample `image` at fractional (ys, xs) grids with edge clamping."""
    h, w = image.shape[:2]
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[..., None]
    wx = (xs - x0)[..., None]
    top = image[y0, x0] * (1.0 - wx) + image[y0, x1] * wx
    bot = image[y1, x0] * (1.0 - wx) + image[y1, x1] * wx
    return top * (1.0 - wy) + bot * wy


def resize_to(image: np.ndarray, side: int = 128) -> np.ndarray:
    """Bilinear resize to side x side; aspect ratio is squashed, not cropped."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise DataError(f"expected an (H, W, 3) image, got shape {image.shape}")
    if side < 1:
        raise DataError(f"target side must be positive, got {side}")
    h, w = image.shape[:2]
    ys = (np.arange(side, dtype=np.float64) + 0.5) * (h / side) - 0.5
    xs = (np.arange(side, dtype=np.float64) + 0.5) * (w / side) - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    out = _bilinear_sample(image.astype(np.float64, copy=False), grid_y, grid_x)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def hflip(image: np.ndarray) -> np.ndarray:
    return image[:, ::-1].copy()


def vflip(image: np.ndarray) -> np.ndarray:
    return image[::-1].copy()


def rotate(image: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center; samples outside clamp to the edge."""
    h, w = image.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rad = np.deg2rad(degrees)
    cos, sin = np.cos(rad), np.sin(rad)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dy, dx = yy - cy, xx - cx
    src_y = cos * dy + sin * dx + cy
    src_x = -sin * dy + cos * dx + cx
    out = _bilinear_sample(image.astype(np.float64, copy=False), src_y, src_x)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def color_jitter(image: np.ndarray, brightness: float, contrast: float) -> np.ndarray:
    """Scale brightness by (1+brightness), then contrast about the mean by (1+contrast)."""
    out = image.astype(np.float64, copy=False) * (1.0 + brightness)
    mean = out.mean()
    out = mean + (out - mean) * (1.0 + contrast)
    return np.clip(out, 0.0, 1.0).astype(np.float32)
