"""Parallel mean-field inference for the fully-connected CRF."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .config import PairwiseConfig
from .filtering import PairwiseFilterBank, pairwise_kernel_matrix
from ..validation import ShapeMismatchError, check_rgb_image, check_unary


def _softmax_neg_cost(cost: np.ndarray) -> np.ndarray:
    """Per-pixel softmax of -cost over the label axis, max-subtracted."""
    z = -cost
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def mean_field_trajectory(
    unary,
    image,
    cfg: PairwiseConfig,
    *,
    method: str = "filter",
    filter_tol: float = 1e-6,
    messenger=None,
) -> Iterator[np.ndarray]:
    """Yield the belief field after each of cfg.iterations parallel updates.

    Beliefs start as the softmax of the negative unary costs. Every sweep
    recomputes, for all pixels at once,

        Q_i(l) prop. exp(-cost_i(l) - sum_{l' != l} sum_{j != i} k_ij Q_j(l'))

    with the cross-label message evaluated by Gaussian filtering
    (method="filter") or by the direct O(N^2) sum (method="direct").
    A prebuilt ``PairwiseFilterBank`` (or any callable mapping beliefs to
    messages) may be passed as `messenger` to amortize filter setup across
    repeated runs on the same image.
    """
    cost = check_unary(unary)
    img = check_rgb_image(image, cost.shape[1], cost.shape[2])
    cfg.validate()
    if method not in ("filter", "direct"):
        raise ValueError(f"unknown message-passing method {method!r}")

    has_pairwise = cfg.w_app > 0 or cfg.w_smooth > 0
    if messenger is not None:
        send = messenger.message if hasattr(messenger, "message") else messenger
    elif not has_pairwise:
        send = lambda q: np.zeros_like(q)
    elif method == "filter":
        bank = PairwiseFilterBank(img, cfg, tol=filter_tol)
        send = bank.message
    else:
        kmat = pairwise_kernel_matrix(img, cfg)
        np.fill_diagonal(kmat, 0.0)
        send = lambda q: (q.reshape(q.shape[0], -1) @ kmat.T).reshape(q.shape)

    q = _softmax_neg_cost(cost)
    for _ in range(cfg.iterations):
        msg = send(q)
        # Potts cross-label penalty: everything but the own-label message.
        penalty = msg.sum(axis=0, keepdims=True) - msg
        q = _softmax_neg_cost(cost + penalty)
        yield q


def mean_field_infer(
    unary,
    image,
    cfg: PairwiseConfig,
    *,
    method: str = "filter",
    filter_tol: float = 1e-6,
    messenger=None,
) -> np.ndarray:
    """Belief field after exactly cfg.iterations mean-field sweeps."""
    q = None
    for q in mean_field_trajectory(
        unary, image, cfg, method=method, filter_tol=filter_tol, messenger=messenger
    ):
        pass
    assert q is not None  # iterations >= 1 is enforced by the config
    return q


def map_labels(beliefs) -> np.ndarray:
    """Per-pixel argmax of the beliefs; ties break toward the smaller label."""
    q = np.asarray(beliefs, dtype=np.float64)
    if q.ndim != 3:
        raise ShapeMismatchError(f"beliefs must be (L, H, W), got shape {q.shape}")
    return np.argmax(q, axis=0).astype(np.int64)
