"""Oriented dimension extraction and per-dimension confidence.

The vertical is estimated once per scene from the camera trajectory: with
zero camera roll, every camera x-axis is horizontal, so the scene up-vector
is the direction most orthogonal to all of them. Object height is then an
extent along the up-vector and the horizontal footprint comes from a
minimum-area enclosing rectangle.

Confidence of one dimension compares point density at the two boundary
slabs of an 8x8x8 grid over the oriented box against the global density;
a dimension whose object fades out before the box boundary scores low.

Axis order throughout this module is (x, y, z) = (length, width, height).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateGeometryError, DegenerateUpVectorError, InputValidationError
from .validation import as_points, as_vector, check_in_range

GRID_BINS = 8
DEFAULT_CONF_THRESHOLD = 0.7
EIGEN_GAP = 1e-6

# Tag of each box axis: x carries length, y width, z height.
AXIS_TAGS = ("l", "w", "h")
TAG_TO_AXIS = {"l": 0, "w": 1, "h": 2}


@dataclass(frozen=True)
class DimensionEstimate:
    """Oriented box dimensions with optional per-dimension confidence.

    ``extents`` is (length, width, height) in reconstruction units with
    length >= width; ``axes`` rows are the corresponding unit directions
    (right-handed, row 2 is the up direction); ``mins`` holds the smallest
    point coordinate along each axis so local coordinates are
    ``points @ axes.T - mins``. ``eta`` is (eta_x, eta_y, eta_z) aligned
    with extents; ``reliable`` marks dimensions whose eta cleared the
    threshold.
    """

    extents: np.ndarray
    axes: np.ndarray
    mins: np.ndarray
    eta: np.ndarray | None = None
    reliable: np.ndarray | None = None

    def __post_init__(self):
        ext = as_vector(self.extents, dims=3, name="extents")
        axes = np.asarray(self.axes, dtype=np.float64)
        mins = as_vector(self.mins, dims=3, name="mins")
        if (ext <= 0).any():
            raise DegenerateGeometryError(f"box extents must be positive, got {ext}")
        if ext[0] < ext[1] - 1e-12:
            raise InputValidationError("length (extents[0]) must be >= width (extents[1])")
        if axes.shape != (3, 3) or np.abs(axes @ axes.T - np.eye(3)).max() > 1e-9:
            raise InputValidationError("axes must be 3 orthonormal row vectors")
        if np.linalg.det(axes) < 0:
            raise InputValidationError("axes must form a right-handed frame")
        eta = self.eta
        if eta is not None:
            eta = as_vector(eta, dims=3, name="eta")
            if (eta < 0).any():
                raise InputValidationError("confidences must be non-negative")
        rel = self.reliable
        if rel is not None:
            rel = np.asarray(rel, dtype=bool).reshape(3)
        for name, val in (("extents", ext), ("axes", axes), ("mins", mins),
                          ("eta", eta), ("reliable", rel)):
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def length(self) -> float:
        return float(self.extents[0])

    @property
    def width(self) -> float:
        return float(self.extents[1])

    @property
    def height(self) -> float:
        return float(self.extents[2])

    @property
    def up(self) -> np.ndarray:
        return self.axes[2]

    def value_of(self, tag: str) -> float:
        return float(self.extents[TAG_TO_AXIS[tag]])

    def eta_of(self, tag: str) -> float:
        if self.eta is None:
            raise InputValidationError("confidence has not been computed")
        return float(self.eta[TAG_TO_AXIS[tag]])

    def reliable_of(self, tag: str) -> bool:
        if self.reliable is None:
            raise InputValidationError("reliability has not been computed")
        return bool(self.reliable[TAG_TO_AXIS[tag]])


def estimate_up_vector(poses, eigen_gap: float = EIGEN_GAP) -> np.ndarray:
    """Scene vertical from camera x-axes.

    Stacks the x-axes as rows of A and returns the unit eigenvector of
    A^T A with the smallest eigenvalue, i.e. the unit minimizer of ||A n||.
    The sign is chosen to agree with the mean camera up direction.

    Raises DegenerateUpVectorError when the two smallest eigenvalues are
    closer than ``eigen_gap`` (all x-axes near-parallel leaves the vertical
    ambiguous).
    """
    poses = list(poses)
    if len(poses) < 2:
        raise InputValidationError("need at least 2 camera poses")
    A = np.asarray([p.x_axis_world for p in poses])
    evals, evecs = np.linalg.eigh(A.T @ A)
    if evals[1] - evals[0] < eigen_gap:
        raise DegenerateUpVectorError(
            f"camera x-axes leave the vertical ambiguous "
            f"(eigenvalue gap {evals[1] - evals[0]:.3e} < {eigen_gap:.0e})"
        )
    n = evecs[:, 0]
    mean_up = np.mean([p.up_world for p in poses], axis=0)
    if float(n @ mean_up) < 0:
        n = -n
    return n / np.linalg.norm(n)


def _hull_vertices(xy: np.ndarray) -> np.ndarray:
    if xy.shape[0] < 3:
        raise DegenerateGeometryError("need at least 3 points for a 2D bounding rectangle")
    try:
        hull = ConvexHull(xy)
    except QhullError as exc:
        raise DegenerateGeometryError(f"degenerate 2D point set: {exc}") from exc
    return xy[hull.vertices]


def _strict_corners(hull: np.ndarray) -> np.ndarray:
    """Drop hull vertices that sit on a straight run between neighbors.

    Densely sampled flat faces put thousands of collinear points on the
    hull boundary; they add no candidate edge directions and do not move
    the extents, so only genuine corners are kept.
    """
    if hull.shape[0] <= 3:
        return hull
    before = hull - np.roll(hull, 1, axis=0)
    after = np.roll(hull, -1, axis=0) - hull
    cross = before[:, 0] * after[:, 1] - before[:, 1] * after[:, 0]
    scale = np.linalg.norm(before, axis=1) * np.linalg.norm(after, axis=1)
    keep = np.abs(cross) > 1e-12 * scale
    return hull[keep] if keep.sum() >= 3 else hull


def _min_rect_basis(xy: np.ndarray):
    """Minimum-area rectangle basis by rotating calipers.

    Returns (u, v, (umin, umax), (vmin, vmax)): 2D unit directions of the
    winning rectangle and the point extents along each. The optimal
    rectangle has a side flush with a hull edge; sweeping the edges in
    counterclockwise order lets the three support vertices (leftmost,
    rightmost, topmost relative to the edge) only ever advance, so the
    search is linear in hull size after the hull itself.
    """
    hull = _strict_corners(_hull_vertices(xy))
    edges = np.roll(hull, -1, axis=0) - hull
    norms = np.linalg.norm(edges, axis=1)
    if (norms == 0).any():
        hull, edges, norms = hull[norms > 0], edges[norms > 0], norms[norms > 0]
    n = hull.shape[0]
    if n < 3:
        raise DegenerateGeometryError("points are collinear; rectangle is degenerate")
    units = edges / norms[:, None]

    # Scalar arithmetic: hulls of smooth outlines keep thousands of
    # vertices and per-step numpy dispatch would dominate the sweep.
    hx = hull[:, 0].tolist()
    hy = hull[:, 1].tolist()
    ux_all = units[:, 0].tolist()
    uy_all = units[:, 1].tolist()

    def advance(p: int, dx: float, dy: float) -> int:
        best_val = hx[p] * dx + hy[p] * dy
        for _ in range(n):
            q = p + 1 if p + 1 < n else 0
            val = hx[q] * dx + hy[q] * dy
            if val > best_val:
                p, best_val = q, val
            else:
                break
        return p

    proj0 = hull @ units[0]
    a = int(np.argmax(proj0))  # extreme along +u
    c = int(np.argmin(proj0))  # extreme along -u
    b = int(np.argmax(hull @ np.array([-units[0, 1], units[0, 0]])))  # along +v

    best = None
    for i in range(n):
        dx, dy = ux_all[i], uy_all[i]
        vx, vy = -dy, dx  # points into the hull for a CCW edge
        a = advance(a, dx, dy)
        b = advance(b, vx, vy)
        c = advance(c, -dx, -dy)
        umin = hx[c] * dx + hy[c] * dy
        umax = hx[a] * dx + hy[a] * dy
        vmin = hx[i] * vx + hy[i] * vy
        vmax = hx[b] * vx + hy[b] * vy
        area = (umax - umin) * (vmax - vmin)
        if best is None or area < best[0]:
            best = (area, i, (umin, umax), (vmin, vmax))
    _, i, ubounds, vbounds = best
    u = units[i]
    return u, np.array([-u[1], u[0]]), ubounds, vbounds


def min_area_rect(points2d) -> tuple[float, float, float]:
    """Minimum-area enclosing rectangle of a 2D point set.

    Returns (length, width, angle) with length >= width and the rectangle
    orientation folded into [0, pi/2).
    """
    xy = as_points(points2d, dims=2, name="points2d")
    u, _, (umin, umax), (vmin, vmax) = _min_rect_basis(xy)
    eu, ev = umax - umin, vmax - vmin
    if min(eu, ev) <= 0:
        raise DegenerateGeometryError("points are collinear; rectangle is degenerate")
    angle = float(np.arctan2(u[1], u[0]) % (np.pi / 2))
    return float(max(eu, ev)), float(min(eu, ev)), angle


def _plane_basis(up: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pick = np.argmin(np.abs(up))
    e1 = np.cross(up, np.eye(3)[pick])
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(up, e1)


def extract_dimensions(points, up, *, min_points: int = 50) -> DimensionEstimate:
    """Oriented (length, width, height) of one object cloud.

    Height is the extent along ``up``; the horizontal axes and extents come
    from the minimum-area rectangle of the cloud projected onto the plane
    orthogonal to ``up``. The sign of ``up`` does not matter.
    """
    pts = as_points(points, name="points")
    if pts.shape[0] < min_points:
        raise InputValidationError(
            f"need at least {min_points} points for dimension extraction, got {pts.shape[0]}"
        )
    up = as_vector(up, dims=3, name="up")
    norm = np.linalg.norm(up)
    if norm == 0:
        raise InputValidationError("up vector must be non-zero")
    up = up / norm

    heights = pts @ up
    height = float(np.ptp(heights))
    if height <= 0:
        raise DegenerateGeometryError("object has zero extent along the up direction")

    e1, e2 = _plane_basis(up)
    xy = np.stack([pts @ e1, pts @ e2], axis=1)
    u2, v2, (umin, umax), (vmin, vmax) = _min_rect_basis(xy)
    eu, ev = umax - umin, vmax - vmin
    if min(eu, ev) <= 0:
        raise DegenerateGeometryError("horizontal projection is collinear")
    long2 = u2 if eu >= ev else v2
    x_axis = long2[0] * e1 + long2[1] * e2
    x_axis /= np.linalg.norm(x_axis)
    y_axis = np.cross(up, x_axis)

    lx = pts @ x_axis
    ly = pts @ y_axis
    extents = np.array([np.ptp(lx), np.ptp(ly), height])
    mins = np.array([lx.min(), ly.min(), heights.min()])
    return DimensionEstimate(
        extents=extents, axes=np.stack([x_axis, y_axis, up]), mins=mins
    )


def density_grid(points, est: DimensionEstimate, bins: int = GRID_BINS) -> np.ndarray:
    """Point counts on a bins^3 grid aligned to the oriented box.

    Coordinates outside the box (possible only for points the estimate was
    not fitted to, or floating fuzz at the faces) clamp to boundary cells,
    so the counts always sum to the number of points.
    """
    pts = as_points(points, name="points")
    local = pts @ est.axes.T - est.mins
    idx = np.clip(
        np.floor(local / est.extents * bins).astype(np.int64), 0, bins - 1
    )
    counts = np.zeros((bins, bins, bins), dtype=np.int64)
    np.add.at(counts, (idx[:, 0], idx[:, 1], idx[:, 2]), 1)
    return counts


def confidence_from_counts(counts: np.ndarray) -> np.ndarray:
    """Per-axis confidence (eta_x, eta_y, eta_z) from grid counts.

    With rho_g the mean count over non-empty cells and rho_head / rho_tail
    the same mean restricted to the first and last slab along an axis,
    eta = sqrt(rho_head * rho_tail) / rho_g. An all-empty boundary slab
    contributes rho = 0 and hence eta = 0.
    """
    counts = np.asarray(counts)
    occupied = counts > 0
    if not occupied.any():
        raise DegenerateGeometryError("grid holds no points")
    rho_g = counts[occupied].mean()

    def slab_density(axis: int, index: int) -> float:
        slab = np.take(counts, index, axis=axis)
        filled = slab[slab > 0]
        return float(filled.mean()) if filled.size else 0.0

    eta = np.empty(3)
    last = counts.shape[0] - 1
    for axis in range(3):
        rho_head = slab_density(axis, 0)
        rho_tail = slab_density(axis, last)
        eta[axis] = np.sqrt(rho_head * rho_tail) / rho_g
    return eta


def dimension_confidence(points, est: DimensionEstimate, bins: int = GRID_BINS) -> np.ndarray:
    return confidence_from_counts(density_grid(points, est, bins=bins))


def select_reliable(eta, threshold: float = DEFAULT_CONF_THRESHOLD) -> np.ndarray:
    """Boolean per-dimension reliability: eta >= threshold."""
    check_in_range(threshold, 0.0, 2.0, "threshold", lo_open=True)
    return np.asarray(eta, dtype=np.float64) >= threshold


def measure_object(
    points,
    up,
    *,
    min_points: int = 50,
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
    bins: int = GRID_BINS,
) -> DimensionEstimate:
    """Extract dimensions and attach confidence and reliability flags."""
    est = extract_dimensions(points, up, min_points=min_points)
    eta = dimension_confidence(points, est, bins=bins)
    return replace(est, eta=eta, reliable=select_reliable(eta, conf_threshold))
