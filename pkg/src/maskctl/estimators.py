"""Estimator wrappers so the pipeline composes with scikit-learn tooling.

Samples flow through the stages as plain dicts. A fresh sample needs
"activations" (list of two rank-3 stacks) and "image" (H x W x 3 array);
each stage returns copies of the dicts with its output added under its own
key ("heatmap", then "beliefs"/"mask" or "candidates"). All estimators are
stateless: fit only validates parameters and the usual get_params /
set_params machinery drives configuration.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .crf import PairwiseConfig, mean_field_infer, map_labels, unary_from_heatmap
from .diverse import DiversityConfig, generate_candidates
from .fusion import fused_heatmap
from .validation import check_rgb_image


def _sample_image(sample: dict) -> np.ndarray:
    if "image" not in sample:
        raise KeyError("sample is missing 'image'")
    return check_rgb_image(sample["image"])


class _StatelessMixin:
    """Nothing is learned from data, so instances always count as fitted."""

    def __sklearn_is_fitted__(self) -> bool:
        return True


class FusionPrior(_StatelessMixin, BaseEstimator, TransformerMixin):
    """Turns two activation stacks into a foreground-probability heat map."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        out = []
        for sample in X:
            img = _sample_image(sample)
            stacks = sample.get("activations")
            if stacks is None:
                raise KeyError("sample is missing 'activations'")
            if isinstance(stacks, dict):
                stacks = [stacks[k] for k in sorted(stacks)]
            heat = fused_heatmap(stacks, target_w=img.shape[1], target_h=img.shape[0])
            out.append({**sample, "heatmap": heat})
        return out


class CRFMaskSegmenter(_StatelessMixin, BaseEstimator):
    """Binary foreground/background smoothing of a heat map with a dense CRF."""

    def __init__(
        self,
        w_app: float = 10.0,
        theta_alpha: float = 80.0,
        theta_beta: float = 13.0,
        w_smooth: float = 3.0,
        theta_gamma: float = 3.0,
        iterations: int = 10,
        epsilon: float = 1e-6,
        method: str = "filter",
        filter_tol: float = 1e-6,
    ):
        self.w_app = w_app
        self.theta_alpha = theta_alpha
        self.theta_beta = theta_beta
        self.w_smooth = w_smooth
        self.theta_gamma = theta_gamma
        self.iterations = iterations
        self.epsilon = epsilon
        self.method = method
        self.filter_tol = filter_tol

    def _crf_config(self) -> PairwiseConfig:
        return PairwiseConfig(
            w_app=self.w_app,
            theta_alpha=self.theta_alpha,
            theta_beta=self.theta_beta,
            w_smooth=self.w_smooth,
            theta_gamma=self.theta_gamma,
            iterations=self.iterations,
        )

    def fit(self, X, y=None):
        self._crf_config()
        return self

    def _beliefs(self, sample: dict) -> np.ndarray:
        img = _sample_image(sample)
        if "heatmap" not in sample:
            raise KeyError("sample is missing 'heatmap'; run FusionPrior first")
        unary = unary_from_heatmap(sample["heatmap"], epsilon=self.epsilon)
        return mean_field_infer(
            unary, img, self._crf_config(), method=self.method, filter_tol=self.filter_tol
        )

    def predict_proba(self, X):
        return [self._beliefs(sample) for sample in X]

    def predict(self, X):
        return [map_labels(self._beliefs(sample)) for sample in X]

    def transform(self, X):
        out = []
        for sample in X:
            beliefs = self._beliefs(sample)
            out.append({**sample, "beliefs": beliefs, "mask": map_labels(beliefs)})
        return out


class DiverseMaskGenerator(_StatelessMixin, BaseEstimator):
    """Generates diverse low-energy mask candidates per sample."""

    def __init__(
        self,
        lambda_: float | None = None,
        num_candidates: int = 30,
        w_app: float = 10.0,
        theta_alpha: float = 80.0,
        theta_beta: float = 13.0,
        w_smooth: float = 3.0,
        theta_gamma: float = 3.0,
        iterations: int = 10,
        epsilon: float = 1e-6,
        method: str = "filter",
        filter_tol: float = 1e-6,
    ):
        self.lambda_ = lambda_
        self.num_candidates = num_candidates
        self.w_app = w_app
        self.theta_alpha = theta_alpha
        self.theta_beta = theta_beta
        self.w_smooth = w_smooth
        self.theta_gamma = theta_gamma
        self.iterations = iterations
        self.epsilon = epsilon
        self.method = method
        self.filter_tol = filter_tol

    def fit(self, X, y=None):
        self._configs()
        return self

    def _configs(self):
        crf = PairwiseConfig(
            w_app=self.w_app,
            theta_alpha=self.theta_alpha,
            theta_beta=self.theta_beta,
            w_smooth=self.w_smooth,
            theta_gamma=self.theta_gamma,
            iterations=self.iterations,
        )
        div = DiversityConfig(lambda_=self.lambda_, num_candidates=self.num_candidates)
        return crf, div

    def predict(self, X):
        crf_cfg, div_cfg = self._configs()
        out = []
        for sample in X:
            img = _sample_image(sample)
            if "heatmap" not in sample:
                raise KeyError("sample is missing 'heatmap'; run FusionPrior first")
            unary = unary_from_heatmap(sample["heatmap"], epsilon=self.epsilon)
            out.append(
                generate_candidates(
                    unary,
                    img,
                    crf_cfg,
                    div_cfg,
                    image_id=str(sample.get("image_id", "")),
                    method=self.method,
                    filter_tol=self.filter_tol,
                )
            )
        return out

    def transform(self, X):
        return [{**sample, "candidates": cs} for sample, cs in zip(X, self.predict(X))]
