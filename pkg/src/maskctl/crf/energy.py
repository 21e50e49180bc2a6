"""Unary construction and the Gibbs energy of a labeling.

The energy is the sum of per-pixel negative log-probabilities plus a Potts
pairwise term over all unordered pixel pairs:

    E(x) = sum_i cost_i(x_i) + sum_{i<j} [x_i != x_j] * k_ij

gibbs_energy evaluates this by direct summation. It exists as the testable
ground truth for inference; production inference never materializes the
pairwise sum.
"""

from __future__ import annotations

import numpy as np

from .config import PairwiseConfig
from .filtering import pixel_features
from ..validation import ShapeMismatchError, as_float_array, check_label_map, check_unary


def unary_from_heatmap(heatmap, epsilon: float = 1e-6) -> np.ndarray:
    """Binary unary costs from a foreground-probability map.

    Returns a (2, H, W) cost volume with label 0 = background and
    label 1 = foreground: cost_fg = -log p, cost_bg = -log(1 - p), with p
    clamped into [epsilon, 1 - epsilon] so costs stay finite.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    h = as_float_array(heatmap, "heatmap")
    if h.ndim != 2:
        raise ShapeMismatchError(f"heatmap must be 2-D, got shape {h.shape}")
    if h.min() < 0.0 or h.max() > 1.0:
        raise ValueError("heatmap values must lie in [0, 1]")
    p = np.clip(h, epsilon, 1.0 - epsilon)
    return np.stack([-np.log1p(-p), -np.log(p)])


def gibbs_energy(labels, unary, image, cfg: PairwiseConfig, block: int = 256) -> float:
    """Energy of a labeling under the unary costs and the two-kernel Potts model.

    Direct O(N^2) pairwise summation in blocks; intended for evaluation and
    testing, cost grows quadratically with the pixel count.
    """
    cost = check_unary(unary)
    num_labels, h, w = cost.shape
    x = check_label_map(labels, num_labels)
    if x.shape != (h, w):
        raise ShapeMismatchError(f"labels shape {x.shape} does not match unary {(h, w)}")
    cfg.validate()

    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    unary_part = float(cost[x, ii, jj].sum())

    pos, col = pixel_features(image, cfg)
    if pos.shape[0] != h * w:
        raise ShapeMismatchError("image spatial size does not match the unary field")
    flat = x.ravel()
    pair_part = 0.0
    inv_a = 1.0 / (2.0 * cfg.theta_alpha**2)
    inv_b = 1.0 / (2.0 * cfg.theta_beta**2)
    inv_g = 1.0 / (2.0 * cfg.theta_gamma**2)
    n = flat.size
    for start in range(0, n, block):
        sl = slice(start, min(start + block, n))
        d2_pos = ((pos[sl, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
        d2_col = ((col[sl, None, :] - col[None, :, :]) ** 2).sum(axis=2)
        k = cfg.w_app * np.exp(-d2_pos * inv_a - d2_col * inv_b)
        k += cfg.w_smooth * np.exp(-d2_pos * inv_g)
        differs = flat[sl, None] != flat[None, :]
        pair_part += float((k * differs).sum())
    return unary_part + 0.5 * pair_part
