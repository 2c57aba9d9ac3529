"""Losses, evaluation metrics, occupancy extraction and feature queries."""

from __future__ import annotations

from .features import PcaBasis, cosine_similarity, pca_fit, pca_project, text_query
from .losses import (
    COMPONENTS,
    LossReport,
    LossWeights,
    VirtualView,
    loss_density_entropy,
    loss_depth,
    loss_feature,
    loss_nerf_distill,
    loss_rgb,
    mean_absolute_error,
    total_loss,
)
from .metrics import (
    FREE,
    OTHERS,
    DepthMetrics,
    IoUReport,
    MetricsReport,
    depth_metrics,
    encode_report,
    iou_suite,
    psnr,
    ssim,
)
from .occupancy import extract_occupancy, semantic_occupancy, voxel_centres
from .similarity import gaussian_window, ssim_map, structural_similarity

__all__ = [
    "COMPONENTS",
    "FREE",
    "OTHERS",
    "DepthMetrics",
    "IoUReport",
    "LossReport",
    "LossWeights",
    "MetricsReport",
    "PcaBasis",
    "VirtualView",
    "cosine_similarity",
    "depth_metrics",
    "encode_report",
    "extract_occupancy",
    "gaussian_window",
    "iou_suite",
    "loss_density_entropy",
    "loss_depth",
    "loss_feature",
    "loss_nerf_distill",
    "loss_rgb",
    "mean_absolute_error",
    "pca_fit",
    "pca_project",
    "psnr",
    "semantic_occupancy",
    "ssim",
    "ssim_map",
    "structural_similarity",
    "text_query",
    "total_loss",
]
