"""Fully-connected pairwise CRF: energy, filtering, and mean-field inference."""

from .config import PairwiseConfig
from .energy import gibbs_energy, unary_from_heatmap
from .filtering import (
    BilateralGaussianFilter,
    PairwiseFilterBank,
    gaussian_kernel_1d,
    message_direct,
    pairwise_kernel_matrix,
    pivoted_cholesky_gaussian,
    spatial_gaussian_sum,
)
from .mean_field import map_labels, mean_field_infer, mean_field_trajectory

__all__ = [
    "PairwiseConfig",
    "unary_from_heatmap",
    "gibbs_energy",
    "BilateralGaussianFilter",
    "PairwiseFilterBank",
    "gaussian_kernel_1d",
    "message_direct",
    "pairwise_kernel_matrix",
    "pivoted_cholesky_gaussian",
    "spatial_gaussian_sum",
    "map_labels",
    "mean_field_infer",
    "mean_field_trajectory",
]
