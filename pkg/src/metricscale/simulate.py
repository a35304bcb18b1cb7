"""Synthetic-scene generator and Monte Carlo harness.

Scenes are deduced entirely from a priors repository: categories are drawn
from the usable leaves, true dimensions from their size mixtures, and
parametric shapes (boxes and elliptical cylinders) stand in for real
objects. Clouds are uniform surface samples converted to reconstruction
units by the scene's ground-truth scale, observed by a circular zero-roll
camera ring.

Truncation models incomplete reconstruction along one axis: points beyond
the cut are removed and a band below the cut is progressively thinned.
A bare planar cut would leave the walls of a solid fully dense right up to
the cut plane, which no real partial reconstruction does and which the
boundary-slab confidence statistic could not detect; the decaying band is
what makes a truncated dimension measurably unreliable.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dimensions import (
    DimensionEstimate,
    estimate_up_vector,
    measure_object,
)
from .errors import InputValidationError, PlacementError
from .geometry import CameraPose, FrameObservation
from .priors import CategoryNode, usable_leaves
from .scale import auto_window, build_measured_objects, optimize_scale

DEFAULT_POINTS_PER_OBJECT = 5000
DEFAULT_CAMERA_COUNT = 12
MIN_DRAWN_SIZE_MM = 10.0

# Truncation thinning: width of the decay band as a fraction of the kept
# extent, and the residual keep probability right at the cut.
TRUNCATION_BAND = 0.3
TRUNCATION_RESIDUAL = 0.02

_FILL_RANGE_MM = (100.0, 600.0)  # for coordinates outside a category's mask


@dataclass(frozen=True)
class SimObject:
    category_path: tuple[str, ...]
    true_dims_mm: np.ndarray  # (w, l, h)
    shape: str
    center: np.ndarray  # world mm, footprint center on the ground plane
    yaw: float
    points: np.ndarray  # reconstruction units
    truncated_axis: str | None = None


@dataclass(frozen=True)
class SimScene:
    true_scale: float  # mm per reconstruction unit
    objects: tuple[SimObject, ...]
    poses: tuple[CameraPose, ...]
    seed: object


@dataclass(frozen=True)
class TrialReport:
    """Relative scale errors for one (object count, disturbance) cell."""

    n_objects: int
    disturbance: float
    trials: int
    errors: np.ndarray  # NaN marks a trial where no object survived selection
    mean: float
    median: float
    std: float
    n_failed: int


@dataclass(frozen=True)
class AblationReport:
    trials: int
    truncation: float
    errors_full_bbox: np.ndarray
    errors_filtered: np.ndarray
    mean_full_bbox: float
    mean_filtered: float


def _sample_box_surface(dims_wlh: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of a box surface; local frame x=length, y=width, z=up."""
    w, l, h = dims_wlh
    areas = np.array([w * h, w * h, l * h, l * h, l * w, l * w])  # x-, x+, y-, y+, z-, z+
    counts = rng.multinomial(n, areas / areas.sum())
    pts = np.empty((n, 3))
    r = rng.random((n, 2))
    out = 0
    half = np.array([l / 2.0, w / 2.0])
    for face, c in enumerate(counts):
        if c == 0:
            continue
        block = np.empty((c, 3))
        uv = r[out:out + c]
        axis = face // 2
        side = face % 2
        if axis == 0:
            block[:, 0] = (side * 2.0 - 1.0) * half[0]
            block[:, 1] = (uv[:, 0] - 0.5) * w
            block[:, 2] = uv[:, 1] * h
        elif axis == 1:
            block[:, 1] = (side * 2.0 - 1.0) * half[1]
            block[:, 0] = (uv[:, 0] - 0.5) * l
            block[:, 2] = uv[:, 1] * h
        else:
            block[:, 2] = side * h
            block[:, 0] = (uv[:, 0] - 0.5) * l
            block[:, 1] = (uv[:, 1] - 0.5) * w
        pts[out:out + c] = block
        out += c
    return pts


def _sample_cylinder_surface(dims_wlh: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Elliptical cylinder: semi-axes l/2 (x) and w/2 (y), height h."""
    w, l, h = dims_wlh
    a, b = l / 2.0, w / 2.0
    # Perimeter via Ramanujan's approximation; close enough for area splits.
    per = np.pi * (3 * (a + b) - np.sqrt((3 * a + b) * (a + 3 * b)))
    areas = np.array([per * h, np.pi * a * b, np.pi * a * b])
    counts = rng.multinomial(n, areas / areas.sum())
    blocks = []
    if counts[0]:
        theta = rng.uniform(0, 2 * np.pi, counts[0])
        z = rng.uniform(0, h, counts[0])
        blocks.append(np.stack([a * np.cos(theta), b * np.sin(theta), z], axis=1))
    for cap, zval in ((1, 0.0), (2, h)):
        if counts[cap]:
            theta = rng.uniform(0, 2 * np.pi, counts[cap])
            rad = np.sqrt(rng.random(counts[cap]))
            blocks.append(
                np.stack(
                    [a * rad * np.cos(theta), b * rad * np.sin(theta),
                     np.full(counts[cap], zval)],
                    axis=1,
                )
            )
    pts = np.concatenate(blocks, axis=0)
    return pts[rng.permutation(len(pts))]


def _truncate_cloud(
    local: np.ndarray, axis: int, fraction: float, rng: np.random.Generator
) -> np.ndarray:
    """Cut the high end of one local axis and thin a band below the cut."""
    coord = local[:, axis]
    lo, hi = coord.min(), coord.max()
    span = hi - lo
    if span <= 0:
        return local
    u = (coord - lo) / span
    u_cut = 1.0 - fraction
    band = TRUNCATION_BAND * u_cut
    keep_prob = np.ones(len(local))
    in_band = (u > u_cut - band) & (u <= u_cut)
    keep_prob[in_band] = TRUNCATION_RESIDUAL + (1.0 - TRUNCATION_RESIDUAL) * (
        (u_cut - u[in_band]) / band
    ) ** 2
    keep_prob[u > u_cut] = 0.0
    keep = rng.random(len(local)) < keep_prob
    if keep.sum() < 4:
        keep[np.argsort(u)[:4]] = True
    return local[keep]


def _draw_dims(leaf: CategoryNode, rng: np.random.Generator, at_component_means: bool) -> np.ndarray:
    """Full (w, l, h) in mm for one instance, honoring the category mask."""
    prior = leaf.prior
    if at_component_means:
        k = int(rng.choice(prior.n_components, p=prior.weights))
        masked = prior.means[k].copy()
    else:
        masked = prior.sample(1, rng)[0]
        for _ in range(50):
            if (masked > MIN_DRAWN_SIZE_MM).all():
                break
            masked = prior.sample(1, rng)[0]
        masked = np.maximum(masked, MIN_DRAWN_SIZE_MM)
    dims = np.empty(3)
    cols = leaf.mask_columns
    for j in range(3):
        if j in cols:
            dims[j] = masked[cols.index(j)]
        else:
            dims[j] = rng.uniform(*_FILL_RANGE_MM)
    if dims[0] > dims[1]:  # keep length >= width, same convention as the priors
        dims[0], dims[1] = dims[1], dims[0]
    return dims


def _ring_pose(position, target, *, fx=600.0, fy=600.0, width=960, height=720) -> CameraPose:
    forward = target - position
    forward = forward / np.linalg.norm(forward)
    x = np.cross(forward, np.array([0.0, 0.0, 1.0]))
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise InputValidationError("camera cannot look straight up or down with zero roll")
    x = x / nx
    y = np.cross(forward, x)
    R = np.stack([x, y, forward])
    return CameraPose(
        rotation=R, translation=-R @ position,
        fx=fx, fy=fy, cx=width / 2.0, cy=height / 2.0, width=width, height=height,
    )


def _camera_ring(scene_radius_mm: float, true_scale: float, n_cameras: int) -> tuple[CameraPose, ...]:
    ring_radius = 2.2 * scene_radius_mm + 2500.0
    cam_height = 1600.0
    target = np.array([0.0, 0.0, 400.0]) / true_scale
    poses = []
    for i in range(n_cameras):
        phi = 2 * np.pi * i / n_cameras
        pos = np.array(
            [ring_radius * np.cos(phi), ring_radius * np.sin(phi), cam_height]
        ) / true_scale
        poses.append(_ring_pose(pos, target))
    return tuple(poses)


def generate_scene(
    repo: CategoryNode,
    n_objects: int,
    true_scale: float,
    *,
    truncation: float | None = None,
    truncation_axis: str | None = None,
    seed=0,
    n_points: int = DEFAULT_POINTS_PER_OBJECT,
    n_cameras: int = DEFAULT_CAMERA_COUNT,
    at_component_means: bool = False,
    max_place_tries: int = 400,
) -> SimScene:
    """Generate one synthetic scene at a known metric scale.

    Categories are sampled uniformly with replacement from the leaves that
    carry a prior (repeats model repeated real-world objects). ``truncation``
    removes points beyond that fraction of one axis extent per object, the
    axis chosen at random unless ``truncation_axis`` pins it to 'w', 'l' or
    'h'. Identical seeds reproduce the scene bit for bit.
    """
    if true_scale <= 0:
        raise InputValidationError("true_scale must be positive")
    if truncation is not None and not 0.0 <= truncation < 1.0:
        raise InputValidationError("truncation must be in [0, 1)")
    if truncation_axis is not None and truncation_axis not in ("w", "l", "h"):
        raise InputValidationError("truncation_axis must be one of 'w', 'l', 'h'")
    rng = np.random.default_rng(seed)
    leaves = usable_leaves(repo)
    if n_objects > 0 and not leaves:
        raise InputValidationError("priors repository has no usable leaf categories")

    chosen = [leaves[int(rng.integers(len(leaves)))] for _ in range(n_objects)]
    dims_list = [_draw_dims(leaf, rng, at_component_means) for _, leaf in chosen]
    shapes = [("box", "cylinder")[int(rng.integers(2))] for _ in range(n_objects)]

    radii = [0.5 * float(np.hypot(d[0], d[1])) for d in dims_list]
    field_radius = max(1500.0, 2.5 * float(np.sqrt(sum(r * r for r in radii))) if radii else 0.0)
    centers: list[np.ndarray] = []
    for i in range(n_objects):
        placed = False
        for _ in range(max_place_tries):
            c = rng.uniform(-field_radius, field_radius, size=2)
            if np.hypot(*c) > field_radius:
                continue
            if all(
                np.hypot(*(c - prev[:2])) >= radii[i] + radii[j] + 50.0
                for j, prev in enumerate(centers)
            ):
                centers.append(np.array([c[0], c[1], 0.0]))
                placed = True
                break
        if not placed:
            raise PlacementError(
                f"could not place object {i} of {n_objects} without overlap"
            )

    objects = []
    for i in range(n_objects):
        (path, _), dims, shape = chosen[i], dims_list[i], shapes[i]
        sampler = _sample_box_surface if shape == "box" else _sample_cylinder_surface
        local = sampler(dims, n_points, rng)
        trunc_axis = None
        if truncation:
            trunc_axis = truncation_axis or ("l", "w", "h")[int(rng.integers(3))]
            local = _truncate_cloud(local, {"l": 0, "w": 1, "h": 2}[trunc_axis], truncation, rng)
        yaw = rng.uniform(0, np.pi)
        cy, sy = np.cos(yaw), np.sin(yaw)
        rot = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
        world = local @ rot.T + centers[i]
        objects.append(
            SimObject(
                category_path=path,
                true_dims_mm=dims,
                shape=shape,
                center=centers[i],
                yaw=yaw,
                points=world / true_scale,
                truncated_axis=trunc_axis,
            )
        )

    poses = _camera_ring(field_radius, true_scale, n_cameras)
    return SimScene(true_scale=true_scale, objects=tuple(objects), poses=poses, seed=seed)


def disturb_estimate(est: DimensionEstimate, factors) -> DimensionEstimate:
    """Scale the measured extents by per-axis factors, keeping length >= width."""
    factors = np.asarray(factors, dtype=np.float64).reshape(3)
    ext = est.extents * factors
    axes = est.axes
    mins = est.mins * factors
    eta, rel = est.eta, est.reliable
    if ext[0] < ext[1]:
        ext = ext[[1, 0, 2]]
        mins = mins[[1, 0, 2]]
        x, z = axes[1], axes[2]
        axes = np.stack([x, np.cross(z, x), z])
        if eta is not None:
            eta = eta[[1, 0, 2]]
        if rel is not None:
            rel = rel[[1, 0, 2]]
    return DimensionEstimate(extents=ext, axes=axes, mins=mins, eta=eta, reliable=rel)


def measure_scene(scene: SimScene, *, conf_threshold: float = 0.7):
    """Run up-vector estimation and per-object dimension measurement."""
    up = estimate_up_vector(scene.poses)
    items = []
    for i, obj in enumerate(scene.objects):
        items.append((i, obj.category_path, measure_object(obj.points, up, conf_threshold=conf_threshold)))
    return items, up


def _error_from_items(items, repo, true_scale, conf_threshold, use_confidence) -> float:
    objects, _ = build_measured_objects(
        items, repo, conf_threshold, use_confidence=use_confidence
    )
    if not objects:
        return float("nan")
    s_min, s_max, ds = auto_window(objects)
    result = optimize_scale(objects, s_min, s_max, ds)
    return abs(result.s_hat - true_scale) / true_scale


def scene_scale_error(
    scene: SimScene,
    repo: CategoryNode,
    *,
    disturbance: float = 0.0,
    disturb_rng: np.random.Generator | None = None,
    conf_threshold: float = 0.7,
    use_confidence: bool = True,
    items=None,
) -> float:
    """Relative scale error of the dims -> select -> optimize pipeline.

    Pass precomputed measurements via ``items`` to amortize extraction
    across several estimation variants. Returns NaN when no object survives
    dimension selection.
    """
    if items is None:
        items, _ = measure_scene(scene, conf_threshold=conf_threshold)
    if disturbance > 0.0:
        if disturb_rng is None:
            raise InputValidationError("disturbance requires a generator")
        items = [
            (i, cat, disturb_estimate(est, disturb_rng.uniform(1 - disturbance, 1 + disturbance, 3)))
            for i, cat, est in items
        ]
    return _error_from_items(items, repo, scene.true_scale, conf_threshold, use_confidence)


def _summary(errors: np.ndarray) -> tuple[float, float, float, int]:
    n_failed = int(np.isnan(errors).sum())
    if n_failed == errors.size:
        return float("nan"), float("nan"), float("nan"), n_failed
    return (
        float(np.nanmean(errors)),
        float(np.nanmedian(errors)),
        float(np.nanstd(errors)),
        n_failed,
    )


def run_trials(
    repo: CategoryNode,
    n_list,
    r_list,
    trials: int,
    seed: int = 0,
    *,
    conf_threshold: float = 0.7,
    n_points: int = DEFAULT_POINTS_PER_OBJECT,
    scale_range: tuple[float, float] = (2.0, 20.0),
    threads: int = 1,
) -> list[TrialReport]:
    """Monte Carlo sweep over object counts and size-disturbance bounds.

    Every (N, R, trial) cell derives its own seed, so reports are identical
    whatever the execution order or thread count.
    """
    if trials < 1:
        raise InputValidationError("trials must be at least 1")
    reports = []
    for n_objects in n_list:
        for disturbance in r_list:
            r_key = int(round(disturbance * 10_000))

            def one_trial(t: int, n_objects=n_objects, disturbance=disturbance, r_key=r_key) -> float:
                root_seed = [seed, n_objects, r_key, t]
                rng = np.random.default_rng(root_seed + [1])
                true_scale = rng.uniform(*scale_range)
                scene = generate_scene(
                    repo, n_objects, true_scale,
                    seed=root_seed + [2], n_points=n_points,
                )
                return scene_scale_error(
                    scene, repo,
                    disturbance=disturbance, disturb_rng=rng,
                    conf_threshold=conf_threshold,
                )

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    errors = np.fromiter(pool.map(one_trial, range(trials)), dtype=np.float64, count=trials)
            else:
                errors = np.fromiter(map(one_trial, range(trials)), dtype=np.float64, count=trials)
            mean, median, std, n_failed = _summary(errors)
            reports.append(
                TrialReport(
                    n_objects=int(n_objects), disturbance=float(disturbance),
                    trials=trials, errors=errors,
                    mean=mean, median=median, std=std, n_failed=n_failed,
                )
            )
    return reports


def ablation_bbox_vs_extraction(
    repo: CategoryNode,
    trials: int,
    truncation: float,
    seed: int = 0,
    *,
    n_objects: int = 5,
    conf_threshold: float = 0.7,
    n_points: int = DEFAULT_POINTS_PER_OBJECT,
    scale_range: tuple[float, float] = (2.0, 20.0),
    threads: int = 1,
) -> AblationReport:
    """Compare raw-bounding-box and confidence-filtered scale estimation.

    Each trial builds one truncated scene and estimates its scale twice:
    once from all prescribed dimensions regardless of confidence, once with
    unreliable dimensions filtered out.
    """
    if truncation <= 0:
        raise InputValidationError("ablation requires truncation > 0")
    if trials < 1:
        raise InputValidationError("trials must be at least 1")

    def one_trial(t: int) -> tuple[float, float]:
        root_seed = [seed, 9001, t]
        rng = np.random.default_rng(root_seed + [1])
        true_scale = rng.uniform(*scale_range)
        scene = generate_scene(
            repo, n_objects, true_scale,
            truncation=truncation, seed=root_seed + [2], n_points=n_points,
        )
        items, _ = measure_scene(scene, conf_threshold=conf_threshold)
        err_raw = _error_from_items(items, repo, true_scale, conf_threshold, False)
        err_filtered = _error_from_items(items, repo, true_scale, conf_threshold, True)
        return err_raw, err_filtered

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pairs = list(pool.map(one_trial, range(trials)))
    else:
        pairs = [one_trial(t) for t in range(trials)]
    raw = np.array([p[0] for p in pairs])
    filt = np.array([p[1] for p in pairs])
    return AblationReport(
        trials=trials, truncation=float(truncation),
        errors_full_bbox=raw, errors_filtered=filt,
        mean_full_bbox=float(np.nanmean(raw)), mean_filtered=float(np.nanmean(filt)),
    )


def scene_to_frames(scene: SimScene, n_frames: int, seed=0) -> list[FrameObservation]:
    """Split each object's cloud into disjoint per-frame views.

    Every point lands in exactly one frame, so merging all frames back
    together recovers each object cloud as a multiset.
    """
    if n_frames < 1:
        raise InputValidationError("need at least one frame")
    rng = np.random.default_rng(seed)
    per_frame: list[list] = [[] for _ in range(n_frames)]
    for obj in scene.objects:
        order = rng.permutation(obj.points.shape[0])
        for f, chunk in enumerate(np.array_split(order, n_frames)):
            if chunk.size:
                per_frame[f].append((obj.category_path, obj.points[np.sort(chunk)]))
    poses = scene.poses
    return [
        FrameObservation(frame_id=f, pose=poses[f % len(poses)], instances=tuple(inst))
        for f, inst in enumerate(per_frame)
    ]
