"""Incremental merging of per-frame instance clouds into per-object clouds.

Frame instances are only ever compared against accumulated objects of the
same category. Within one frame the globally closest (object, instance)
pair is merged repeatedly while its distance stays under the threshold;
once the global minimum fails the threshold no further pairs are considered
(break, not skip-and-continue), matching the greedy formulation this
implements. Unmatched instances open new objects, unmatched objects persist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputValidationError
from .geometry import (
    FrameObservation,
    cloud_distance,
    remove_outliers_iforest,
    remove_outliers_knn,
)
from .validation import as_points

MIN_OBJECT_POINTS = 50
DEFAULT_THRESHOLD_FRAC = 0.02


@dataclass(frozen=True)
class ObjectCloud:
    """Merged cloud of one real object, with its category and source frames."""

    category_path: tuple[str, ...]
    points: np.ndarray
    source_frames: frozenset[int]

    def __post_init__(self):
        pts = as_points(self.points, name="object points")
        if pts.shape[0] == 0:
            raise InputValidationError("object cloud must be non-empty")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "category_path", tuple(self.category_path))
        object.__setattr__(self, "source_frames", frozenset(self.source_frames))


def merge_frame(objects, frame: FrameObservation, threshold: float) -> list[ObjectCloud]:
    """Fold one frame's instances into the accumulated object list.

    Ties in the pair search break lexicographically by (object index,
    instance index), so the result is deterministic however the distances
    are evaluated.
    """
    if threshold < 0:
        raise InputValidationError("threshold must be non-negative")
    objects = list(objects)
    merged_points = {}  # object index -> list of point blocks
    consumed_objects = set()
    consumed_instances = set()

    categories = {obj.category_path for obj in objects} | {
        cat for cat, _ in frame.instances
    }
    for category in sorted(categories):
        obj_idx = [i for i, o in enumerate(objects) if o.category_path == category]
        inst_idx = [j for j, (cat, _) in enumerate(frame.instances) if cat == category]
        if not obj_idx or not inst_idx:
            continue
        dist = np.full((len(obj_idx), len(inst_idx)), np.inf)
        for a, i in enumerate(obj_idx):
            for b, j in enumerate(inst_idx):
                dist[a, b] = cloud_distance(objects[i].points, frame.instances[j][1])
        open_obj = set(range(len(obj_idx)))
        open_inst = set(range(len(inst_idx)))
        while open_obj and open_inst:
            best = min(
                ((dist[a, b], a, b) for a in sorted(open_obj) for b in sorted(open_inst)),
                key=lambda t: (t[0], t[1], t[2]),
            )
            d, a, b = best
            if d >= threshold:
                break
            open_obj.remove(a)
            open_inst.remove(b)
            i, j = obj_idx[a], inst_idx[b]
            merged_points[i] = [objects[i].points, frame.instances[j][1]]
            consumed_objects.add(i)
            consumed_instances.add(j)

    out = []
    for i, obj in enumerate(objects):
        if i in consumed_objects:
            out.append(
                ObjectCloud(
                    category_path=obj.category_path,
                    points=np.concatenate(merged_points[i], axis=0),
                    source_frames=obj.source_frames | {frame.frame_id},
                )
            )
        else:
            out.append(obj)
    for j, (category, points) in enumerate(frame.instances):
        if j not in consumed_instances and points.shape[0] > 0:
            out.append(
                ObjectCloud(
                    category_path=category,
                    points=points.copy(),
                    source_frames={frame.frame_id},
                )
            )
    return out


def merge_frames(frames, threshold: float) -> list[ObjectCloud]:
    """Raw fold of merge_frame over frames; conserves every input point."""
    objects: list[ObjectCloud] = []
    for frame in sorted(frames, key=lambda f: f.frame_id):
        objects = merge_frame(objects, frame, threshold)
    return objects


def scene_diagonal(frames) -> float:
    """Diagonal of the bounding box of all instance points in the scene."""
    blocks = [pts for f in frames for _, pts in f.instances if pts.shape[0]]
    if not blocks:
        return 0.0
    allpts = np.concatenate(blocks, axis=0)
    return float(np.linalg.norm(allpts.max(axis=0) - allpts.min(axis=0)))


def clean_object(
    obj: ObjectCloud,
    *,
    knn_k: int = 10,
    knn_stddev_mult: float = 2.0,
    iforest_trees: int = 100,
    iforest_subsample: int = 256,
    contamination: float = 0.02,
    seed: int = 0,
) -> ObjectCloud | None:
    """De-outliered copy of one object; None when nothing is left.

    Each filter is applied only when the cloud is large enough for it
    (more than k points for the k-NN statistic, at least the subsample
    size for the forest).
    """
    pts = obj.points
    if pts.shape[0] > knn_k:
        pts = remove_outliers_knn(pts, k=knn_k, stddev_mult=knn_stddev_mult)
    if pts.shape[0] >= iforest_subsample and contamination > 0:
        pts = remove_outliers_iforest(
            pts,
            n_trees=iforest_trees,
            subsample=iforest_subsample,
            contamination=contamination,
            seed=seed,
        )
    if pts.shape[0] == 0:
        return None
    return ObjectCloud(
        category_path=obj.category_path, points=pts, source_frames=obj.source_frames
    )


def merge_scene(
    frames,
    *,
    threshold: float | None = None,
    threshold_frac: float = DEFAULT_THRESHOLD_FRAC,
    min_points: int = MIN_OBJECT_POINTS,
    seed: int = 0,
    **clean_kwargs,
) -> list[ObjectCloud]:
    """Merge all frames, de-outlier per object, drop tiny clouds.

    When ``threshold`` is not given it defaults to ``threshold_frac`` times
    the scene bounding-box diagonal, since reconstruction units are
    arbitrary.
    """
    frames = list(frames)
    if threshold is None:
        threshold = threshold_frac * scene_diagonal(frames)
    objects = merge_frames(frames, threshold)
    cleaned = []
    for obj in objects:
        kept = clean_object(obj, seed=seed, **clean_kwargs)
        if kept is not None and kept.points.shape[0] >= min_points:
            cleaned.append(kept)
    return cleaned
