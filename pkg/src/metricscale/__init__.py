"""Metric scale recovery for monocular 3D reconstructions.

Estimates the millimeters-per-unit scaling factor of an instance-labeled
point-cloud scene by matching extracted object dimensions against a
repository of per-category size priors.
"""

__version__ = "0.1.0"

from .dimensions import (
    DimensionEstimate,
    dimension_confidence,
    estimate_up_vector,
    extract_dimensions,
    measure_object,
    min_area_rect,
    select_reliable,
)
from .geometry import (
    CameraPose,
    FrameObservation,
    Mask2D,
    cloud_distance,
    label_points,
    remove_outliers_iforest,
    remove_outliers_knn,
)
from .gmm import GaussianMixture, fit_gmm
from .merging import ObjectCloud, merge_frame, merge_scene
from .pipeline import PipelineConfig, ScaleEstimator, run_pipeline
from .priors import CategoryNode, load_repository, lookup, save_repository
from .scale import (
    MeasuredObject,
    ScaleEstimate,
    auto_window,
    build_measured_objects,
    log_posterior,
    optimize_scale,
)

__all__ = [
    "CameraPose",
    "CategoryNode",
    "DimensionEstimate",
    "FrameObservation",
    "GaussianMixture",
    "Mask2D",
    "MeasuredObject",
    "ObjectCloud",
    "PipelineConfig",
    "ScaleEstimate",
    "ScaleEstimator",
    "auto_window",
    "build_measured_objects",
    "cloud_distance",
    "dimension_confidence",
    "estimate_up_vector",
    "extract_dimensions",
    "fit_gmm",
    "label_points",
    "log_posterior",
    "lookup",
    "load_repository",
    "measure_object",
    "merge_frame",
    "merge_scene",
    "min_area_rect",
    "optimize_scale",
    "remove_outliers_iforest",
    "remove_outliers_knn",
    "run_pipeline",
    "save_repository",
    "select_reliable",
]
