"""Input validation helpers shared across the pipeline stages."""

from __future__ import annotations

import numpy as np


class ShapeMismatchError(ValueError):
    """Array shapes do not agree with what the operation requires."""


def as_float_array(a, name: str = "array") -> np.ndarray:
    """Convert to a float64 ndarray, rejecting non-finite values."""
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_rank(arr: np.ndarray, rank: int, name: str = "array") -> np.ndarray:
    if arr.ndim != rank:
        raise ShapeMismatchError(f"{name} must be rank-{rank}, got rank-{arr.ndim}")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, name_a: str = "a", name_b: str = "b") -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(
            f"{name_a} shape {a.shape} does not match {name_b} shape {b.shape}"
        )


def check_rgb_image(image, height: int | None = None, width: int | None = None) -> np.ndarray:
    """Normalize an image to float64 (H, W, 3).

    Grayscale (H, W) input is replicated into three channels so the color
    kernel still applies. Optionally checks spatial dimensions.
    """
    img = as_float_array(image, "image")
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeMismatchError(f"image must be (H, W) or (H, W, 3), got {img.shape}")
    if height is not None and img.shape[:2] != (height, width):
        raise ShapeMismatchError(
            f"image spatial size {img.shape[:2]} does not match expected {(height, width)}"
        )
    return img


def check_unary(cost, name: str = "unary") -> np.ndarray:
    """Validate a per-pixel per-label cost volume of shape (L, H, W)."""
    arr = as_float_array(cost, name)
    check_rank(arr, 3, name)
    if arr.shape[0] < 2:
        raise ShapeMismatchError(f"{name} needs at least 2 labels, got {arr.shape[0]}")
    return arr


def check_label_map(labels, num_labels: int, name: str = "labels") -> np.ndarray:
    """Validate an (H, W) integer labeling with every label < num_labels."""
    arr = np.asarray(labels)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name} must be an integer array, got dtype {arr.dtype}")
    check_rank(arr, 2, name)
    if arr.size and (arr.min() < 0 or arr.max() >= num_labels):
        raise ValueError(f"{name} has labels outside [0, {num_labels})")
    return arr.astype(np.int64, copy=False)
