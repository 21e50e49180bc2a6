"""Weak-supervision mask pipeline: activation fusion, dense-CRF smoothing,
diverse mask candidates, weakly-supervised losses, and mIOU evaluation."""

from .crf import (
    PairwiseConfig,
    gibbs_energy,
    map_labels,
    mean_field_infer,
    mean_field_trajectory,
    message_direct,
    unary_from_heatmap,
)
from .diverse import CandidateSet, DiversityConfig, augment_unary, generate_candidates
from .estimators import CRFMaskSegmenter, DiverseMaskGenerator, FusionPrior
from .fusion import channel_average, fuse, fused_heatmap, upsample_bilinear
from .losses import (
    LossConfig,
    LossReport,
    TagSet,
    loss_mask,
    loss_mask_alt,
    loss_weak_alt,
    loss_weak_tags,
    lse_pool,
    softmax_probs,
)
from .metrics import ConfusionAccumulator, IouReport, confusion_accumulate, iou_report
from .tensor_store import (
    IGNORE_LABEL,
    DatasetManifest,
    ManifestEntry,
    load_manifest,
    read_label_mask,
    read_tensor,
    write_label_mask,
    write_tensor,
)

__version__ = "0.1.0"

__all__ = [
    "PairwiseConfig",
    "gibbs_energy",
    "map_labels",
    "mean_field_infer",
    "mean_field_trajectory",
    "message_direct",
    "unary_from_heatmap",
    "CandidateSet",
    "DiversityConfig",
    "augment_unary",
    "generate_candidates",
    "CRFMaskSegmenter",
    "DiverseMaskGenerator",
    "FusionPrior",
    "channel_average",
    "fuse",
    "fused_heatmap",
    "upsample_bilinear",
    "LossConfig",
    "LossReport",
    "TagSet",
    "loss_mask",
    "loss_mask_alt",
    "loss_weak_alt",
    "loss_weak_tags",
    "lse_pool",
    "softmax_probs",
    "ConfusionAccumulator",
    "IouReport",
    "confusion_accumulate",
    "iou_report",
    "IGNORE_LABEL",
    "DatasetManifest",
    "ManifestEntry",
    "load_manifest",
    "read_label_mask",
    "read_tensor",
    "write_label_mask",
    "write_tensor",
    "__version__",
]
