"""Pairwise-potential configuration for the fully-connected CRF."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

_JSON_KEYS = ("w_app", "theta_alpha", "theta_beta", "w_smooth", "theta_gamma", "iterations")


@dataclass
class PairwiseConfig:
    """Contrast-sensitive Potts potential with two Gaussian kernels.

    The appearance kernel couples spatial distance (theta_alpha, in pixels)
    with color distance (theta_beta, in intensity units); the smoothness
    kernel is purely spatial (theta_gamma). Defaults are the widely used
    dense-CRF settings for natural images; they are configuration, not
    ground truth.
    """

    w_app: float = 10.0
    theta_alpha: float = 80.0
    theta_beta: float = 13.0
    w_smooth: float = 3.0
    theta_gamma: float = 3.0
    iterations: int = 10

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for name in ("w_app", "w_smooth"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        for name in ("theta_alpha", "theta_beta", "theta_gamma"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError(f"iterations must be an integer >= 1, got {self.iterations}")
        self.iterations = int(self.iterations)

    def to_dict(self) -> dict:
        return {k: asdict(self)[k] for k in _JSON_KEYS}

    @classmethod
    def from_dict(cls, d: dict) -> "PairwiseConfig":
        unknown = set(d) - set(_JSON_KEYS)
        if unknown:
            raise ValueError(f"unknown pairwise config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "PairwiseConfig":
        return cls.from_dict(json.loads(s))
