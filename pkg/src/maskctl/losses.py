"""Weak-supervision segmentation losses with analytic score gradients.

All losses take raw class scores of shape (N, H, W), apply the per-pixel
softmax internally, and report the gradient with respect to the raw scores.
Soft maxima use log-sum-exp pooling with sharpness r (default 5), which
interpolates between the mean (r -> 0) and the maximum (r -> inf).

Four variants are provided:

* loss_weak_tags  - image tags only; per-class LSE pooling over all pixels.
* loss_mask       - tags plus a binary foreground mask; present classes pool
                    over foreground pixels, background over the rest, and
                    absent classes are penalized per pixel.
* loss_weak_alt   - tags only; per-pixel LSE pooling over present classes.
* loss_mask_alt   - mask variant of the per-pixel pooling formulation.

Empty index sets contribute 0 (an image tagged with every class must not
crash). Probabilities are clamped below 1 - 1e-12 inside log(1 - S) terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .validation import ShapeMismatchError, as_float_array, check_label_map

_ONE_MINUS = 1.0 - 1e-12


class EmptySetError(ValueError):
    """LSE pooling over an empty collection."""


class EmptyForegroundError(ValueError):
    """Mask loss requires at least one foreground pixel."""


class EmptyBackgroundError(ValueError):
    """Mask loss requires at least one background pixel."""


class MissingBackgroundTagError(ValueError):
    """Mask losses require class 0 (background) among the present tags."""


@dataclass(frozen=True)
class TagSet:
    """Image-level class presence: `present` and `absent` partition 0..N-1."""

    present: frozenset
    absent: frozenset

    def __post_init__(self):
        present = frozenset(int(k) for k in self.present)
        absent = frozenset(int(k) for k in self.absent)
        object.__setattr__(self, "present", present)
        object.__setattr__(self, "absent", absent)
        if not present:
            raise ValueError("present tag set must not be empty")
        if present & absent:
            raise ValueError(f"tags overlap: {sorted(present & absent)}")
        universe = present | absent
        if universe != frozenset(range(len(universe))):
            raise ValueError("present and absent must partition 0..N-1")

    @property
    def num_classes(self) -> int:
        return len(self.present) + len(self.absent)

    @classmethod
    def from_present(cls, present, num_classes: int) -> "TagSet":
        present = frozenset(int(k) for k in present)
        return cls(present, frozenset(range(num_classes)) - present)


@dataclass
class LossConfig:
    r: float = 5.0

    def __post_init__(self):
        if not math.isfinite(self.r) or self.r <= 0:
            raise ValueError(f"LSE sharpness r must be finite and > 0, got {self.r}")


@dataclass
class LossReport:
    value: float
    grad: np.ndarray | None


def softmax_probs(scores) -> np.ndarray:
    """Per-pixel class probabilities, computed with max-subtraction."""
    s = as_float_array(scores, "scores")
    if s.ndim != 3:
        raise ShapeMismatchError(f"scores must be (N, H, W), got shape {s.shape}")
    z = s - s.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def lse_pool(values, r: float) -> float:
    """(1/r) * log(mean(exp(r * v))) over a non-empty collection."""
    v = as_float_array(values, "values").ravel()
    if v.size == 0:
        raise EmptySetError("cannot pool an empty set")
    if not math.isfinite(r) or r <= 0:
        raise ValueError(f"r must be finite and > 0, got {r}")
    m = v.max()
    return float(m + math.log(np.exp(r * (v - m)).mean()) / r)


def _pool_with_weights(values: np.ndarray, r: float):
    """LSE pool of a flat array plus the softmax weights d(pool)/d(values)."""
    m = values.max()
    e = np.exp(r * (values - m))
    total = e.sum()
    pooled = m + math.log(total / values.size) / r
    return pooled, e / total


def _pool_over_axis0(values: np.ndarray, r: float):
    """LSE pool over axis 0 of a (K, ...) array; returns pooled map and weights."""
    m = values.max(axis=0, keepdims=True)
    e = np.exp(r * (values - m))
    total = e.sum(axis=0, keepdims=True)
    pooled = m[0] + np.log(total[0] / values.shape[0]) / r
    return pooled, e / total


def _grad_scores(probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
    """Chain rule through the per-pixel softmax: dL/ds from dL/dS."""
    inner = (d_probs * probs).sum(axis=0, keepdims=True)
    return probs * (d_probs - inner)


def _check_scores_tags(scores, tags: TagSet):
    s = as_float_array(scores, "scores")
    if s.ndim != 3:
        raise ShapeMismatchError(f"scores must be (N, H, W), got shape {s.shape}")
    if s.shape[0] != tags.num_classes:
        raise ShapeMismatchError(
            f"scores have {s.shape[0]} classes but tags cover {tags.num_classes}"
        )
    return s


def _absent_pixel_term(probs, absent, scale, d_probs):
    """Accumulate -scale * sum log(1 - S[k,i,j]) over absent classes k."""
    if not absent:
        return 0.0
    ks = sorted(absent)
    clamped = np.minimum(probs[ks], _ONE_MINUS)
    value = -scale * float(np.log1p(-clamped).sum())
    if d_probs is not None:
        d_probs[ks] += scale / (1.0 - clamped)
    return value


def loss_weak_tags(scores, tags: TagSet, cfg: LossConfig = LossConfig(), *, with_grad: bool = True) -> LossReport:
    """Tag-only loss: present classes should score high somewhere, absent nowhere.

    value = -(1/|P|) sum_{k in P} log pool(S^k) - (1/|A|) sum_{k in A} log(1 - pool(S^k))
    where pool is the LSE over all pixels of class k's probability map.
    """
    s = _check_scores_tags(scores, tags)
    probs = softmax_probs(s)
    h, w = probs.shape[1:]
    present, absent = sorted(tags.present), sorted(tags.absent)
    d_probs = np.zeros_like(probs) if with_grad else None

    value = 0.0
    for k in present:
        pooled, wts = _pool_with_weights(probs[k].ravel(), cfg.r)
        value -= math.log(pooled) / len(present)
        if with_grad:
            d_probs[k] -= wts.reshape(h, w) / (pooled * len(present))
    for k in absent:
        pooled, wts = _pool_with_weights(probs[k].ravel(), cfg.r)
        pooled = min(pooled, _ONE_MINUS)
        value -= math.log1p(-pooled) / len(absent)
        if with_grad:
            d_probs[k] += wts.reshape(h, w) / ((1.0 - pooled) * len(absent))

    grad = _grad_scores(probs, d_probs) if with_grad else None
    return LossReport(value=value, grad=grad)


def _check_mask(mask, shape):
    m = check_label_map(np.asarray(mask, dtype=np.int64), 2, "mask")
    if m.shape != shape:
        raise ShapeMismatchError(f"mask shape {m.shape} does not match scores {shape}")
    fg = m == 1
    if not fg.any():
        raise EmptyForegroundError("mask has no foreground pixels")
    if fg.all():
        raise EmptyBackgroundError("mask has no background pixels")
    return fg


def loss_mask(scores, tags: TagSet, mask, cfg: LossConfig = LossConfig(), *, with_grad: bool = True) -> LossReport:
    """Mask loss: present classes pool over foreground, background over the rest.

    value = -(1/(|P|-1)) sum_{k in P, k != 0} log pool_fg(S^k)
            - log pool_bg(S^0)
            - (1/(|A| |I|)) sum_{i,j, k in A} log(1 - S[k,i,j])
    """
    s = _check_scores_tags(scores, tags)
    if 0 not in tags.present:
        raise MissingBackgroundTagError("background class 0 must be tagged present")
    probs = softmax_probs(s)
    fg = _check_mask(mask, probs.shape[1:])
    bg = ~fg
    npix = probs.shape[1] * probs.shape[2]
    present_fg = sorted(tags.present - {0})
    d_probs = np.zeros_like(probs) if with_grad else None

    value = 0.0
    for k in present_fg:
        pooled, wts = _pool_with_weights(probs[k][fg], cfg.r)
        value -= math.log(pooled) / len(present_fg)
        if with_grad:
            d_probs[k][fg] -= wts / (pooled * len(present_fg))
    pooled_bg, wts_bg = _pool_with_weights(probs[0][bg], cfg.r)
    value -= math.log(pooled_bg)
    if with_grad:
        d_probs[0][bg] -= wts_bg / pooled_bg
    if tags.absent:
        value += _absent_pixel_term(probs, tags.absent, 1.0 / (len(tags.absent) * npix), d_probs)

    grad = _grad_scores(probs, d_probs) if with_grad else None
    return LossReport(value=value, grad=grad)


def loss_weak_alt(scores, tags: TagSet, cfg: LossConfig = LossConfig(), *, with_grad: bool = True) -> LossReport:
    """Alternative tag-only loss: pool over present classes at every pixel.

    value = -(1/|I|) sum_{i,j} log pool_{k in P}(S[k,i,j])
            - (1/|I|) sum_{i,j, k in A} log(1 - S[k,i,j])
    """
    s = _check_scores_tags(scores, tags)
    probs = softmax_probs(s)
    npix = probs.shape[1] * probs.shape[2]
    present = sorted(tags.present)
    d_probs = np.zeros_like(probs) if with_grad else None

    pooled, wts = _pool_over_axis0(probs[present], cfg.r)
    value = -float(np.log(pooled).sum()) / npix
    if with_grad:
        d_probs[present] -= wts / (pooled[None] * npix)
    value += _absent_pixel_term(probs, tags.absent, 1.0 / npix, d_probs)

    grad = _grad_scores(probs, d_probs) if with_grad else None
    return LossReport(value=value, grad=grad)


def loss_mask_alt(scores, tags: TagSet, mask, cfg: LossConfig = LossConfig(), *, with_grad: bool = True) -> LossReport:
    """Mask variant of the per-pixel pooling loss.

    value = -(1/|M|) sum_{fg} log pool_{k in P, k != 0}(S[k,i,j])
            - (1/|Mbar|) sum_{bg} log S[0,i,j]
            - (1/|I|) sum_{i,j, k in A} log(1 - S[k,i,j])
    """
    s = _check_scores_tags(scores, tags)
    if 0 not in tags.present:
        raise MissingBackgroundTagError("background class 0 must be tagged present")
    probs = softmax_probs(s)
    fg = _check_mask(mask, probs.shape[1:])
    bg = ~fg
    npix = probs.shape[1] * probs.shape[2]
    present_fg = sorted(tags.present - {0})
    d_probs = np.zeros_like(probs) if with_grad else None

    value = 0.0
    if present_fg:
        pooled, wts = _pool_over_axis0(probs[present_fg][:, fg], cfg.r)
        value -= float(np.log(pooled).sum()) / fg.sum()
        if with_grad:
            for idx, k in enumerate(present_fg):
                d_probs[k][fg] -= wts[idx] / (pooled * fg.sum())
    value -= float(np.log(probs[0][bg]).sum()) / bg.sum()
    if with_grad:
        d_probs[0][bg] -= 1.0 / (probs[0][bg] * bg.sum())
    value += _absent_pixel_term(probs, tags.absent, 1.0 / npix, d_probs)

    grad = _grad_scores(probs, d_probs) if with_grad else None
    return LossReport(value=value, grad=grad)


LOSS_VARIANTS = {
    "weak": loss_weak_tags,
    "mask": loss_mask,
    "weak_alt": loss_weak_alt,
    "mask_alt": loss_mask_alt,
}
