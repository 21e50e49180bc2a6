"""Per-class intersection-over-union and its mean over defined classes.

Evaluation follows the PASCAL protocol: one confusion matrix accumulated
over the whole dataset (not per-image averages), ignore pixels skipped,
IOU_c = TP / (TP + FP + FN). Classes that never occur in ground truth nor
prediction are undefined and excluded from the mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .tensor_store import IGNORE_LABEL
from .validation import ShapeMismatchError

# Class names used for the text table when num_classes == 21.
VOC_CLASS_NAMES = (
    "bg", "aero", "bike", "bird", "boat", "bottle", "bus", "car", "cat",
    "chair", "cow", "table", "dog", "horse", "mbike", "person", "plant",
    "sheep", "sofa", "train", "tv",
)


class EmptyStateError(ValueError):
    """Report requested before any pixel was accumulated."""


class ConfusionAccumulator:
    """Streaming confusion matrix; partial accumulators merge by addition."""

    def __init__(self, num_classes: int):
        if num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {num_classes}")
        self.num_classes = num_classes
        self.matrix = np.zeros((num_classes, num_classes), dtype=np.int64)

    def update(self, pred, gt) -> "ConfusionAccumulator":
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ShapeMismatchError(f"pred shape {pred.shape} != gt shape {gt.shape}")
        keep = gt != IGNORE_LABEL
        p = pred[keep].astype(np.int64)
        g = gt[keep].astype(np.int64)
        if p.size and (p.min() < 0 or p.max() >= self.num_classes):
            raise ValueError(f"prediction labels outside [0, {self.num_classes})")
        if g.size and (g.min() < 0 or g.max() >= self.num_classes):
            raise ValueError(f"ground-truth labels outside [0, {self.num_classes})")
        np.add.at(self.matrix, (g, p), 1)
        return self

    def merge(self, other: "ConfusionAccumulator") -> "ConfusionAccumulator":
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge accumulators with different class counts")
        self.matrix += other.matrix
        return self


@dataclass
class IouReport:
    """Per-class IOU (None where undefined) and the mean over defined classes."""

    per_class: dict
    miou: float

    def to_dict(self) -> dict:
        return {
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "miou": self.miou,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text_table(self, class_names=None) -> str:
        """Two-row table: class columns plus a trailing mIOU column (percent)."""
        n = len(self.per_class)
        if class_names is None:
            class_names = VOC_CLASS_NAMES if n == len(VOC_CLASS_NAMES) else [
                f"class_{k}" for k in range(n)
            ]
        cells = [
            "-" if self.per_class[k] is None else f"{100.0 * self.per_class[k]:.1f}"
            for k in range(n)
        ]
        names = list(class_names) + ["mIOU"]
        cells.append(f"{100.0 * self.miou:.1f}")
        widths = [max(len(a), len(b)) for a, b in zip(names, cells)]
        header = "  ".join(name.rjust(w) for name, w in zip(names, widths))
        values = "  ".join(cell.rjust(w) for cell, w in zip(cells, widths))
        return header + "\n" + values


def confusion_accumulate(pred, gt, state: ConfusionAccumulator) -> ConfusionAccumulator:
    """Functional alias for ConfusionAccumulator.update."""
    return state.update(pred, gt)


def iou_report(state: ConfusionAccumulator) -> IouReport:
    m = state.matrix
    if m.sum() == 0:
        raise EmptyStateError("no pixels accumulated")
    tp = np.diag(m).astype(np.float64)
    fp = m.sum(axis=0) - tp
    fn = m.sum(axis=1) - tp
    denom = tp + fp + fn
    per_class = {}
    defined = []
    for k in range(state.num_classes):
        if denom[k] == 0:
            per_class[k] = None
        else:
            iou = float(tp[k] / denom[k])
            per_class[k] = iou
            defined.append(iou)
    if not defined:
        raise EmptyStateError("no class has a defined IOU")
    return IouReport(per_class=per_class, miou=float(np.mean(defined)))
