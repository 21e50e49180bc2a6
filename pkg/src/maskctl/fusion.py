"""Fuse hidden-layer activation stacks into a foreground-probability heat map.

The pipeline is: channel-average each rank-3 stack, bilinearly upsample the
resulting 2-D maps to the image size, sum them elementwise, then min-max
scale into [0, 1]. A constant (uninformative) sum maps to 0.5 everywhere so
downstream inference still runs.
"""

from __future__ import annotations

import numpy as np

from .validation import ShapeMismatchError, as_float_array, check_rank, check_same_shape


class InvalidTargetError(ValueError):
    """Upsampling target has a non-positive dimension."""


def channel_average(t) -> np.ndarray:
    """Mean over the channel axis of a (C, H, W) stack; returns (H, W)."""
    arr = as_float_array(t, "activation stack")
    check_rank(arr, 3, "activation stack")
    if arr.shape[0] < 1:
        raise ShapeMismatchError("activation stack needs at least one channel")
    return arr.mean(axis=0)


def upsample_bilinear(t, target_w: int, target_h: int) -> np.ndarray:
    """Corner-aligned bilinear resize of a 2-D map to (target_h, target_w).

    Corner-aligned sampling maps source corners onto target corners, so a
    1x2 map [0, 1] resized to 1x3 gives [0, 0.5, 1] and constants stay
    constant.
    """
    arr = as_float_array(t, "map")
    check_rank(arr, 2, "map")
    if target_w < 1 or target_h < 1:
        raise InvalidTargetError(f"target size {target_w}x{target_h} must be positive")
    src_h, src_w = arr.shape

    def _positions(src: int, dst: int) -> np.ndarray:
        if dst == 1 or src == 1:
            return np.zeros(dst)
        return np.arange(dst) * (src - 1) / (dst - 1)

    ys = _positions(src_h, target_h)
    xs = _positions(src_w, target_w)
    y0 = np.clip(np.floor(ys).astype(int), 0, src_h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]

    top = arr[np.ix_(y0, x0)] * (1 - wx) + arr[np.ix_(y0, x1)] * wx
    bot = arr[np.ix_(y1, x0)] * (1 - wx) + arr[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def fuse(layer4, layer5) -> np.ndarray:
    """Elementwise sum of two 2-D maps, min-max scaled into [0, 1].

    If the summed map is constant the result is uniformly 0.5.
    """
    a = as_float_array(layer4, "layer4")
    b = as_float_array(layer5, "layer5")
    check_rank(a, 2, "layer4")
    check_rank(b, 2, "layer5")
    check_same_shape(a, b, "layer4", "layer5")
    s = a + b
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.full(s.shape, 0.5)
    return (s - lo) / (hi - lo)


def fused_heatmap(stacks, target_w: int, target_h: int) -> np.ndarray:
    """Full prior pipeline for one image: pool, upsample, sum, scale.

    `stacks` holds exactly two rank-3 activation tensors (the two
    highest-level convolutional stages); their spatial sizes may differ.
    """
    stacks = list(stacks)
    if len(stacks) != 2:
        raise ShapeMismatchError(f"expected exactly 2 activation stacks, got {len(stacks)}")
    pooled = [channel_average(s) for s in stacks]
    resized = [upsample_bilinear(p, target_w, target_h) for p in pooled]
    return fuse(resized[0], resized[1])
