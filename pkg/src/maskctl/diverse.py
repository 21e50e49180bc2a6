"""Diverse low-energy mask candidates via Hamming-reward unary augmentation.

Each round rewards labelings that disagree with every mask produced so far:
the reward enters as an extra unary term, so the augmented energy of any
labeling x equals its base energy minus lambda times the summed Hamming
distances to the previous masks. Inference cost is unchanged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .crf import PairwiseConfig, PairwiseFilterBank, gibbs_energy, map_labels, mean_field_infer
from .tensor_store import read_binary_mask, write_binary_mask
from .validation import ShapeMismatchError, check_label_map, check_unary


@dataclass
class DiversityConfig:
    """Diversity trade-off: lambda_ is the per-pixel disagreement reward.

    lambda_ = None auto-scales to 0.1 * mean(|unary cost|) so the reward is
    comparable to the unary magnitudes. num_candidates is the number of
    masks generated per image.
    """

    lambda_: float | None = None
    num_candidates: int = 30

    def __post_init__(self) -> None:
        if self.lambda_ is not None:
            if not math.isfinite(self.lambda_) or self.lambda_ < 0:
                raise ValueError(f"lambda_ must be finite and >= 0, got {self.lambda_}")
        if int(self.num_candidates) != self.num_candidates or self.num_candidates < 1:
            raise ValueError(f"num_candidates must be an integer >= 1, got {self.num_candidates}")
        self.num_candidates = int(self.num_candidates)

    def resolve_lambda(self, unary: np.ndarray) -> float:
        if self.lambda_ is not None:
            return float(self.lambda_)
        return 0.1 * float(np.mean(np.abs(unary)))


@dataclass
class CandidateSet:
    """Ordered mask candidates for one image with their base Gibbs energies."""

    image_id: str
    masks: list[np.ndarray] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    lambda_: float = 0.0

    def __len__(self) -> int:
        return len(self.masks)


def augment_unary(unary, previous, lambda_: float) -> np.ndarray:
    """Subtract the diversity reward from every label that disagrees with history.

    cost'_i(l) = cost_i(l) - lambda * #{m : previous_m(i) != l}. With an
    empty history this is the identity.
    """
    cost = check_unary(unary).copy()
    num_labels = cost.shape[0]
    if not math.isfinite(lambda_) or lambda_ < 0:
        raise ValueError(f"lambda_ must be finite and >= 0, got {lambda_}")
    for prev in previous:
        mask = check_label_map(prev, num_labels, "previous mask")
        if mask.shape != cost.shape[1:]:
            raise ShapeMismatchError(
                f"previous mask shape {mask.shape} does not match unary {cost.shape[1:]}"
            )
        cost -= lambda_
        onehot = (np.arange(num_labels)[:, None, None] == mask[None, :, :])
        cost += lambda_ * onehot
    return cost


def generate_candidates(
    unary,
    image,
    crf_cfg: PairwiseConfig,
    div_cfg: DiversityConfig,
    *,
    image_id: str = "",
    method: str = "filter",
    filter_tol: float = 1e-6,
) -> CandidateSet:
    """Generate num_candidates masks, each pushed away from all previous ones.

    Candidate 0 is the plain mean-field MAP. Every later candidate runs
    inference on the unary augmented by the full history. Reported energies
    are base (unaugmented) Gibbs energies; duplicates are kept so candidate
    indices stay stable.
    """
    cost = check_unary(unary)
    lam = div_cfg.resolve_lambda(cost)
    out = CandidateSet(image_id=image_id, lambda_=lam)
    messenger = None
    if method == "filter" and (crf_cfg.w_app > 0 or crf_cfg.w_smooth > 0):
        # One filter bank serves every round; only the unary changes.
        messenger = PairwiseFilterBank(image, crf_cfg, tol=filter_tol)
    for _ in range(div_cfg.num_candidates):
        augmented = augment_unary(cost, out.masks, lam) if out.masks else cost
        beliefs = mean_field_infer(
            augmented, image, crf_cfg, method=method, filter_tol=filter_tol, messenger=messenger
        )
        mask = map_labels(beliefs)
        out.masks.append(mask)
        out.energies.append(gibbs_energy(mask, cost, image, crf_cfg))
    return out


def save_candidates(cs: CandidateSet, out_dir) -> None:
    """Persist as candidate_<m>.png (0/255) plus meta.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for m, mask in enumerate(cs.masks):
        write_binary_mask(out / f"candidate_{m}.png", mask)
    meta = {"image_id": cs.image_id, "lambda": cs.lambda_, "energies": cs.energies}
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_candidates(dir_path) -> CandidateSet:
    d = Path(dir_path)
    meta = json.loads((d / "meta.json").read_text())
    masks = [
        read_binary_mask(d / f"candidate_{m}.png").astype(np.int64)
        for m in range(len(meta["energies"]))
    ]
    return CandidateSet(
        image_id=meta["image_id"],
        masks=masks,
        energies=[float(e) for e in meta["energies"]],
        lambda_=float(meta["lambda"]),
    )
