"""Point-cloud primitives: labeled projection, cloud distance, de-outliering.

All operations are pure functions of immutable inputs. Point clouds are
float64 (n, 3) arrays in reconstruction units; pixels use the convention
that a projection (u, v) with u in [0, width) falls into column floor(u).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from sklearn.ensemble import IsolationForest

from .errors import InputValidationError
from .validation import as_points, as_vector, check_in_range, check_rotation


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera pose plus pinhole intrinsics (no lens distortion).

    ``rotation`` maps world to camera coordinates (x right, y down,
    z forward); its rows are the camera axes expressed in world coordinates.
    """

    rotation: np.ndarray
    translation: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        object.__setattr__(self, "translation", as_vector(self.translation, dims=3, name="translation"))
        if self.fx <= 0 or self.fy <= 0:
            raise InputValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise InputValidationError("image size must be positive")
        self.rotation.setflags(write=False)
        self.translation.setflags(write=False)

    @property
    def x_axis_world(self) -> np.ndarray:
        """The camera's right direction as a world vector."""
        return self.rotation[0]

    @property
    def up_world(self) -> np.ndarray:
        """The camera's up direction (negative image-y) as a world vector."""
        return -self.rotation[1]

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates (n, 2) and depths (n,) of world points."""
        pts = as_points(points)
        cam = pts @ self.rotation.T + self.translation
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * cam[:, 0] / z + self.cx
            v = self.fy * cam[:, 1] / z + self.cy
        return np.stack([u, v], axis=1), z


@dataclass(frozen=True)
class Mask2D:
    """Pixel membership mask stored as a (height, width) boolean array."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise InputValidationError(
                f"mask bits must have shape ({self.height}, {self.width}), got {bits.shape}"
            )
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_pixels(cls, width: int, height: int, pixels) -> "Mask2D":
        bits = np.zeros((height, width), dtype=bool)
        for px, py in pixels:
            bits[int(py), int(px)] = True
        return cls(width=width, height=height, bits=bits)

    @classmethod
    def full(cls, width: int, height: int) -> "Mask2D":
        return cls(width=width, height=height, bits=np.ones((height, width), dtype=bool))


@dataclass(frozen=True)
class FrameObservation:
    """One frame's pose and its per-instance labeled sub-clouds."""

    frame_id: int
    pose: CameraPose
    instances: tuple = field(default_factory=tuple)  # ((category_path, points), ...)

    def __post_init__(self):
        inst = []
        for category_path, points in self.instances:
            inst.append((tuple(category_path), as_points(points, name="instance points")))
        object.__setattr__(self, "instances", tuple(inst))


def label_points(cloud, pose: CameraPose, mask: Mask2D) -> np.ndarray:
    """Points that project in front of the camera into a masked pixel.

    All points are projected; no occlusion testing is done, so a point behind
    a surface still picks up the mask label when its pixel is covered.
    """
    pts = as_points(cloud, name="cloud")
    if pts.shape[0] == 0:
        raise InputValidationError("cloud must be non-empty")
    if (mask.width, mask.height) != (pose.width, pose.height):
        raise InputValidationError("mask size does not match camera image size")
    uv, depth = pose.project(pts)
    keep = depth > 0
    col = np.floor(uv[:, 0]).astype(np.int64)
    row = np.floor(uv[:, 1]).astype(np.int64)
    inside = keep & (col >= 0) & (col < mask.width) & (row >= 0) & (row < mask.height)
    idx = np.flatnonzero(inside)
    hit = mask.bits[row[idx], col[idx]]
    sel = np.zeros(pts.shape[0], dtype=bool)
    sel[idx[hit]] = True
    return pts[sel]


def cloud_distance(a, b) -> float:
    """Mean nearest-neighbor distance from the smaller cloud to the larger.

    With the smaller cloud as A (swapping if needed), this is
    (1/|A|) * sum_i min_j ||a_i - b_j||, which makes the value symmetric in
    the call signature.
    """
    pa = as_points(a, name="a")
    pb = as_points(b, name="b")
    if pa.shape[0] == 0 or pb.shape[0] == 0:
        raise InputValidationError("cloud_distance requires non-empty clouds")
    if pa.shape[0] > pb.shape[0]:
        pa, pb = pb, pa
    dists, _ = cKDTree(pb).query(pa, k=1)
    return float(np.mean(dists))


def knn_mean_distances(cloud, k: int) -> np.ndarray:
    """Per-point mean distance to the k nearest other points."""
    pts = as_points(cloud, name="cloud")
    if k < 1:
        raise InputValidationError("k must be at least 1")
    if pts.shape[0] <= k:
        raise InputValidationError(f"need more than k={k} points, got {pts.shape[0]}")
    dists, _ = cKDTree(pts).query(pts, k=k + 1)
    return dists[:, 1:].mean(axis=1)


def remove_outliers_knn(cloud, k: int = 10, stddev_mult: float = 2.0) -> np.ndarray:
    """Statistical outlier removal by k-nearest-neighbor mean distance.

    Drops points whose mean k-NN distance exceeds the global mean plus
    ``stddev_mult`` standard deviations of that statistic.
    """
    pts = as_points(cloud, name="cloud")
    stat = knn_mean_distances(pts, k)
    cutoff = stat.mean() + stddev_mult * stat.std()
    return pts[stat <= cutoff]


def iforest_scores(cloud, n_trees: int = 100, subsample: int = 256, seed: int = 0) -> np.ndarray:
    """Isolation-forest anomaly scores, higher meaning more anomalous."""
    pts = as_points(cloud, name="cloud")
    if pts.shape[0] < subsample:
        raise InputValidationError(
            f"need at least subsample={subsample} points, got {pts.shape[0]}"
        )
    forest = IsolationForest(
        n_estimators=n_trees, max_samples=subsample, random_state=seed
    ).fit(pts)
    # sklearn's score_samples is high for inliers; negate so high = anomalous.
    return -forest.score_samples(pts)


def remove_outliers_iforest(
    cloud,
    n_trees: int = 100,
    subsample: int = 256,
    contamination: float = 0.02,
    seed: int = 0,
) -> np.ndarray:
    """Drop the ``contamination`` fraction with the highest isolation scores.

    Exactly floor(contamination * n) points are removed, ties broken toward
    lower point index, so results are deterministic under a fixed seed.
    """
    check_in_range(contamination, 0.0, 0.5, "contamination", hi_open=True)
    pts = as_points(cloud, name="cloud")
    if contamination == 0.0:
        return pts.copy()
    scores = iforest_scores(pts, n_trees=n_trees, subsample=subsample, seed=seed)
    n_drop = int(np.floor(contamination * pts.shape[0]))
    if n_drop == 0:
        return pts.copy()
    order = np.argsort(-scores, kind="stable")
    drop = np.zeros(pts.shape[0], dtype=bool)
    drop[order[:n_drop]] = True
    return pts[~drop]
