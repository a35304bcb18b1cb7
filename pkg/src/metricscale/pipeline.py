"""End-to-end scale estimation: merge, orient, measure, select, optimize.

The pipeline consumes per-frame labeled clouds (a scene bundle or a list of
FrameObservation) and a priors repository, and produces a ScaleEstimate
plus a machine-readable report. ``ScaleEstimator`` wraps the same flow in a
fit/predict interface so it composes with scikit-learn style tooling.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from . import __version__ as _pkg_version
from .bundle import read_scene
from .dimensions import estimate_up_vector, measure_object
from .errors import DegenerateGeometryError, InputValidationError, NoObjectsError
from .merging import MIN_OBJECT_POINTS, ObjectCloud, merge_scene
from .priors import CategoryNode, load_repository
from .reporting import downsample_curve
from .scale import (
    ScaleEstimate,
    auto_window,
    build_measured_objects,
    optimize_scale,
)


@dataclass
class PipelineConfig:
    """Knobs for one estimation run; mirrors the CLI flags."""

    merge_threshold: float | None = None  # absolute, reconstruction units
    merge_threshold_frac: float = 0.02  # of the scene bbox diagonal
    min_points: int = MIN_OBJECT_POINTS
    knn_k: int = 10
    knn_stddev_mult: float = 2.0
    iforest_trees: int = 100
    iforest_subsample: int = 256
    contamination: float = 0.02
    conf_threshold: float = 0.7
    s_min: float | None = None
    s_max: float | None = None
    ds: float | None = None
    curve_points: int = 1000
    seed: int = 0

    def window_is_explicit(self) -> bool:
        given = [self.s_min, self.s_max, self.ds]
        if any(v is not None for v in given) and not all(v is not None for v in given):
            raise InputValidationError("s_min, s_max and ds must be given together")
        return self.s_min is not None


@dataclass
class PipelineResult:
    estimate: ScaleEstimate
    objects: list[ObjectCloud]
    measured_items: list  # (object id, category path, DimensionEstimate)
    used_objects: list  # MeasuredObject
    dropped: list[tuple[int, str]]
    up: np.ndarray
    merge_threshold: float
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def scale(self) -> float:
        return self.estimate.s_hat


def run_pipeline(frames, repo: CategoryNode, config: PipelineConfig | None = None) -> PipelineResult:
    """Run the full estimation chain over loaded frames.

    Raises NoObjectsError when the scene yields nothing to measure, and
    DegenerateUpVectorError when the trajectory cannot orient the scene.
    """
    config = config or PipelineConfig()
    frames = list(frames)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    from .merging import scene_diagonal

    threshold = config.merge_threshold
    if threshold is None:
        threshold = config.merge_threshold_frac * scene_diagonal(frames)
    objects = merge_scene(
        frames,
        threshold=threshold,
        min_points=config.min_points,
        seed=config.seed,
        knn_k=config.knn_k,
        knn_stddev_mult=config.knn_stddev_mult,
        iforest_trees=config.iforest_trees,
        iforest_subsample=config.iforest_subsample,
        contamination=config.contamination,
    )
    timings["merge"] = time.perf_counter() - t0
    if not objects:
        raise NoObjectsError("no objects detected in the scene after merging")

    t0 = time.perf_counter()
    up = estimate_up_vector(frame.pose for frame in frames)
    timings["up_vector"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    measured_items = []
    dropped: list[tuple[int, str]] = []
    for i, obj in enumerate(objects):
        try:
            est = measure_object(
                obj.points, up,
                min_points=config.min_points, conf_threshold=config.conf_threshold,
            )
        except (DegenerateGeometryError, InputValidationError) as exc:
            dropped.append((i, f"dimension extraction failed: {exc}"))
            continue
        measured_items.append((i, obj.category_path, est))
    timings["dimensions"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    used, selection_dropped = build_measured_objects(
        measured_items, repo, config.conf_threshold
    )
    dropped.extend(selection_dropped)
    if not used:
        raise NoObjectsError("no object kept a reliable dimension with a prior")
    if config.window_is_explicit():
        s_min, s_max, ds = config.s_min, config.s_max, config.ds
    else:
        s_min, s_max, ds = auto_window(used)
    estimate = optimize_scale(used, s_min, s_max, ds)
    timings["optimize"] = time.perf_counter() - t0

    return PipelineResult(
        estimate=estimate,
        objects=objects,
        measured_items=measured_items,
        used_objects=used,
        dropped=dropped,
        up=up,
        merge_threshold=float(threshold),
        timings=timings,
    )


def build_report(result: PipelineResult, config: PipelineConfig) -> dict:
    """Assemble the versioned, deterministic report document."""
    est = result.estimate
    used_by_id = {m.object_id: m for m in result.used_objects}
    contrib = dict(est.per_object)
    objects = []
    for obj_id, category, dims in result.measured_items:
        cloud = result.objects[obj_id]
        entry = {
            "id": obj_id,
            "category": "/".join(category),
            "n_points": int(cloud.points.shape[0]),
            "source_frames": sorted(cloud.source_frames),
            "dims_wlh": [dims.width, dims.length, dims.height],
            "eta_xyz": list(dims.eta),
            "reliable_xyz": [bool(v) for v in dims.reliable],
        }
        if obj_id in used_by_id:
            m = used_by_id[obj_id]
            entry["used_dims"] = list(m.dim_tags)
            entry["measured"] = list(m.measured)
            entry["log_likelihood_at_s_hat"] = contrib[obj_id]
        objects.append(entry)
    return {
        "version": 1,
        "generator": f"metricscale {_pkg_version}",
        "seed": config.seed,
        "scale_mm_per_unit": est.s_hat,
        "scale_refined": est.s_refined,
        "window": {"s_min": est.s_min, "s_max": est.s_max, "ds": est.ds},
        "n_grid": int(est.log_likelihoods.shape[0]),
        "up_vector": list(result.up),
        "merge_threshold": result.merge_threshold,
        "conf_threshold": config.conf_threshold,
        "objects": objects,
        "dropped": [{"id": i, "reason": reason} for i, reason in result.dropped],
        "curve": downsample_curve(est.grid_s, est.log_likelihoods, config.curve_points),
    }


class ScaleEstimator(BaseEstimator):
    """Scene-to-scale estimator with a scikit-learn style interface.

    Parameters mirror :class:`PipelineConfig`; ``priors`` is a path to a
    priors file or an already-loaded tree. ``fit`` accepts a scene bundle
    directory or a list of FrameObservation and exposes the result through
    ``scale_`` (millimeters per reconstruction unit), ``estimate_``,
    ``result_`` and ``report_``. ``predict`` converts reconstruction-unit
    lengths to millimeters.
    """

    def __init__(
        self,
        priors=None,
        *,
        merge_threshold=None,
        merge_threshold_frac=0.02,
        min_points=MIN_OBJECT_POINTS,
        contamination=0.02,
        conf_threshold=0.7,
        s_min=None,
        s_max=None,
        ds=None,
        seed=0,
    ):
        self.priors = priors
        self.merge_threshold = merge_threshold
        self.merge_threshold_frac = merge_threshold_frac
        self.min_points = min_points
        self.contamination = contamination
        self.conf_threshold = conf_threshold
        self.s_min = s_min
        self.s_max = s_max
        self.ds = ds
        self.seed = seed

    def _config(self) -> PipelineConfig:
        return PipelineConfig(
            merge_threshold=self.merge_threshold,
            merge_threshold_frac=self.merge_threshold_frac,
            min_points=self.min_points,
            contamination=self.contamination,
            conf_threshold=self.conf_threshold,
            s_min=self.s_min,
            s_max=self.s_max,
            ds=self.ds,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        """Estimate the scene scale from a bundle directory or frame list."""
        if self.priors is None:
            raise InputValidationError("ScaleEstimator needs a priors file or tree")
        repo = self.priors
        if not isinstance(repo, CategoryNode):
            repo = load_repository(repo, seed=self.seed)
        frames = X
        if isinstance(X, (str, Path)):
            frames = read_scene(X)
        config = self._config()
        result = run_pipeline(frames, repo, config)
        self.repo_ = repo
        self.result_ = result
        self.estimate_ = result.estimate
        self.scale_ = result.estimate.s_hat
        self.report_ = build_report(result, config)
        return self

    def predict(self, lengths):
        """Convert reconstruction-unit lengths to millimeters."""
        if not hasattr(self, "scale_"):
            raise InputValidationError("estimator is not fitted")
        return np.asarray(lengths, dtype=np.float64) * self.scale_
