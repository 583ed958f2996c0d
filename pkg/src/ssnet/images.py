"""PNG reading/writing for frames, masks, and previews."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import ContractError


def load_frame_png(path: str) -> np.ndarray:
    """Read an 8-bit or 16-bit grayscale PNG as a float64 grid in [0, 1]."""
    with Image.open(path) as img:
        if img.mode == "I;16":
            arr = np.asarray(img, dtype=np.float64) / 65535.0
        elif img.mode == "I":
            arr = np.asarray(img, dtype=np.float64) / 65535.0
        else:
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return np.clip(arr, 0.0, 1.0)


def save_frame_png(pixels: np.ndarray, path: str) -> None:
    """Write a [0, 1] grid as 8-bit grayscale."""
    arr = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(path)


def load_mask_png(path: str) -> np.ndarray:
    """Read a binary mask PNG (0/255) as a {0, 1} uint8 grid."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return (arr >= 128).astype(np.uint8)


def save_mask_png(mask: np.ndarray, path: str) -> None:
    """Write a {0, 1} mask as 0/255 grayscale."""
    mask = np.asarray(mask)
    if not np.isin(mask, (0, 1)).all():
        raise ContractError("mask must be binary")
    Image.fromarray((mask.astype(np.uint8) * 255), mode="L").save(path)


def save_preview_png(grid: np.ndarray, path: str) -> None:
    """Write a real-valued grid min-max stretched to span the full 8-bit range."""
    grid = np.asarray(grid, dtype=np.float64)
    lo, hi = grid.min(), grid.max()
    if hi - lo > 0:
        stretched = (grid - lo) / (hi - lo)
    else:
        stretched = np.zeros_like(grid)
    Image.fromarray(np.round(stretched * 255.0).astype(np.uint8), mode="L").save(path)
