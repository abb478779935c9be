"""Bilinear resizing and contact-sheet composition."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres: src = (dst + 0.5) * n_in / n_out - 0.5, clamped to the edge
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(image, size: tuple[int, int]) -> np.ndarray:
    img = np.asarray(image)
    h2, w2 = int(size[0]), int(size[1])
    if h2 < 1 or w2 < 1:
        raise ValueError(f"resize target must be at least 1x1, got {size}")
    if img.ndim != 3:
        raise ValueError(f"expected a (C, H, W) image, got shape {img.shape}")
    if img.shape[1:] == (h2, w2):
        return img.copy()
    y0, y1, fy = _axis_weights(img.shape[1], h2)
    x0, x1, fx = _axis_weights(img.shape[2], w2)
    src = img.astype(np.float64)
    rows = src[:, y0, :] * (1 - fy)[None, :, None] + src[:, y1, :] * fy[None, :, None]
    out = rows[:, :, x0] * (1 - fx)[None, None, :] + rows[:, :, x1] * fx[None, None, :]
    return out.astype(img.dtype if img.dtype.kind == "f" else np.float32)


def compose_grid(images: Sequence[np.ndarray], columns: int, separator: int = 2) -> np.ndarray:
    """Tile images row-major with white separator lines between tiles (no outer border)."""
    if len(images) == 0:
        raise ValueError("compose_grid needs at least one image")
    if columns < 1:
        raise ValueError("columns must be >= 1")
    shape = np.shape(images[0])
    for i, im in enumerate(images):
        if np.shape(im) != shape:
            raise ValueError(f"image {i} has shape {np.shape(im)}, expected {shape}")
    c, h, w = shape
    cols = min(columns, len(images))
    rows = -(-len(images) // cols)
    grid = np.ones((c, rows * h + (rows - 1) * separator, cols * w + (cols - 1) * separator), dtype=np.float32)
    for i, im in enumerate(images):
        r, q = divmod(i, cols)
        y, x = r * (h + separator), q * (w + separator)
        grid[:, y:y + h, x:x + w] = im
    return grid
