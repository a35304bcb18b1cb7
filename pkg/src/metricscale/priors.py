"""Hierarchical repository of per-category object-size priors.

The on-disk format is a JSON tree: every node carries a name, a dimension
mask, optional raw size samples in millimeters, an optional serialized
mixture, and children. Inner nodes aggregate the samples of their subtree.
After :func:`load_repository` the tree is immutable; lookups and density
queries are safe to run concurrently.

Sample rows are [w, l, h] triples; a coordinate outside the node's
``dim_mask`` may be null (stored as NaN). A node's prior covers exactly the
masked coordinates, in (w, l, h) order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PriorsFormatError, UnknownCategoryError
from .errors import InputValidationError
from .gmm import COV_FLOOR, GaussianMixture, fit_gmm

DIM_TAGS = ("w", "l", "h")

MAX_TREE_DEPTH = 5
MIN_SAMPLES = 10
MAX_COMPONENTS = 3


def split_category_path(path: str) -> tuple[str, ...]:
    """Parse a slash-separated category path, e.g. 'furniture/chair'."""
    parts = tuple(p for p in path.strip("/").split("/") if p)
    if not parts:
        raise InputValidationError(f"empty category path: {path!r}")
    return parts


@dataclass
class CategoryNode:
    """One category in the size-prior tree."""

    name: str
    dim_mask: tuple[str, ...]
    samples: np.ndarray  # (n, 3) float, NaN marks an absent coordinate
    children: list["CategoryNode"] = field(default_factory=list)
    prior: GaussianMixture | None = None
    image_url: str | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def mask_columns(self) -> tuple[int, ...]:
        return tuple(DIM_TAGS.index(t) for t in self.dim_mask)

    def effective_samples(self) -> np.ndarray:
        """Own rows plus all descendants' rows (inner nodes aggregate)."""
        stacks = [self.samples] if self.samples.size else []
        for child in self.children:
            rows = child.effective_samples()
            if rows.size:
                stacks.append(rows)
        return np.concatenate(stacks, axis=0) if stacks else np.empty((0, 3))

    @property
    def n_samples(self) -> int:
        return self.effective_samples().shape[0]

    def prior_samples(self) -> np.ndarray:
        """Effective rows restricted to masked columns, complete rows only."""
        rows = self.effective_samples()
        if not rows.size:
            return np.empty((0, len(self.dim_mask)))
        cols = list(self.mask_columns)
        sub = rows[:, cols]
        return sub[np.isfinite(sub).all(axis=1)]

    def iter_nodes(self):
        yield self
        for child in self.children:
            yield from child.iter_nodes()

    def iter_leaves(self):
        for node in self.iter_nodes():
            if node.is_leaf:
                yield node


def _parse_mask(raw, where: str) -> tuple[str, ...]:
    if not isinstance(raw, list) or not raw:
        raise PriorsFormatError(f"{where}: dim_mask must be a non-empty list")
    tags = []
    for t in raw:
        if t not in DIM_TAGS:
            raise PriorsFormatError(f"{where}: unknown dimension tag {t!r}")
        if t in tags:
            raise PriorsFormatError(f"{where}: duplicate dimension tag {t!r}")
        tags.append(t)
    return tuple(t for t in DIM_TAGS if t in tags)


def _parse_samples(raw, mask: tuple[str, ...], where: str) -> np.ndarray:
    if raw is None:
        return np.empty((0, 3))
    if not isinstance(raw, list):
        raise PriorsFormatError(f"{where}: samples must be a list of [w, l, h] rows")
    out = np.full((len(raw), 3), np.nan)
    masked = set(mask)
    for i, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != 3:
            raise PriorsFormatError(f"{where}: sample {i} is not a 3-entry row")
        for j, tag in enumerate(DIM_TAGS):
            v = row[j]
            if v is None:
                if tag in masked:
                    raise PriorsFormatError(
                        f"{where}: sample {i} has null at masked dimension {tag!r}"
                    )
                continue
            v = float(v)
            if not np.isfinite(v) or v <= 0:
                raise PriorsFormatError(
                    f"{where}: sample {i} has non-positive size {v!r} for {tag!r}"
                )
            out[i, j] = v
    return out


def _parse_node(raw: dict, depth: int, where: str) -> CategoryNode:
    if not isinstance(raw, dict):
        raise PriorsFormatError(f"{where}: node must be an object")
    if depth > MAX_TREE_DEPTH:
        raise PriorsFormatError(f"{where}: tree deeper than {MAX_TREE_DEPTH} levels")
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise PriorsFormatError(f"{where}: node name must be a non-empty string")
    here = f"{where}/{name}"
    mask = _parse_mask(raw.get("dim_mask"), here)
    samples = _parse_samples(raw.get("samples"), mask, here)

    children = []
    seen = set()
    for child_raw in raw.get("children", []):
        child = _parse_node(child_raw, depth + 1, here)
        if child.name in seen:
            raise PriorsFormatError(f"{here}: duplicate sibling name {child.name!r}")
        seen.add(child.name)
        children.append(child)

    prior = None
    if raw.get("gmm") is not None:
        try:
            prior = GaussianMixture.from_dict(raw["gmm"])
        except InputValidationError as exc:
            raise PriorsFormatError(f"{here}: invalid gmm: {exc}") from exc
        if prior.dims != len(mask):
            raise PriorsFormatError(
                f"{here}: gmm has {prior.dims} dims but dim_mask selects {len(mask)}"
            )

    url = raw.get("image_url")
    if url is not None and not isinstance(url, str):
        raise PriorsFormatError(f"{here}: image_url must be a string")
    return CategoryNode(
        name=name, dim_mask=mask, samples=samples, children=children,
        prior=prior, image_url=url,
    )


def _fit_tree_priors(node: CategoryNode, *, max_components, min_samples, seed, cov_floor):
    for child in node.children:
        _fit_tree_priors(
            child, max_components=max_components, min_samples=min_samples,
            seed=seed, cov_floor=cov_floor,
        )
    if node.prior is None:
        usable = node.prior_samples()
        if usable.shape[0] >= min_samples:
            node.prior = fit_gmm(
                usable, max_components, min_samples=min_samples,
                cov_floor=cov_floor, seed=seed,
            )


def load_repository(
    path,
    *,
    fit_missing: bool = True,
    max_components: int = MAX_COMPONENTS,
    min_samples: int = MIN_SAMPLES,
    cov_floor: float = COV_FLOOR,
    seed: int = 0,
) -> CategoryNode:
    """Load and validate a priors file, fitting absent node priors.

    Serialized mixtures are kept as-is; nodes without one get a prior fitted
    from their aggregated masked samples whenever at least ``min_samples``
    complete rows exist (set ``fit_missing=False`` to skip fitting).
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise PriorsFormatError(f"cannot read priors file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PriorsFormatError(f"priors file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("version") != 1:
        raise PriorsFormatError(f"priors file {path} must have version 1")
    if "tree" not in payload:
        raise PriorsFormatError(f"priors file {path} is missing the 'tree' key")
    root = _parse_node(payload["tree"], depth=1, where="")
    for node in root.iter_nodes():
        if node.is_leaf and node.prior is not None and node.samples.shape[0] < min_samples:
            raise PriorsFormatError(
                f"leaf {node.name!r} carries a prior but only {node.samples.shape[0]} samples"
            )
    if fit_missing:
        _fit_tree_priors(
            root, max_components=max_components, min_samples=min_samples,
            seed=seed, cov_floor=cov_floor,
        )
    return root


def _node_to_dict(node: CategoryNode, include_gmm: bool) -> dict:
    rows = [
        [None if not np.isfinite(v) else float(v) for v in row]
        for row in node.samples
    ]
    out: dict = {"name": node.name, "dim_mask": list(node.dim_mask), "samples": rows}
    if node.image_url is not None:
        out["image_url"] = node.image_url
    if include_gmm and node.prior is not None:
        out["gmm"] = node.prior.to_dict()
    if node.children:
        out["children"] = [_node_to_dict(c, include_gmm) for c in node.children]
    return out


def save_repository(root: CategoryNode, path, *, include_gmm: bool = True) -> None:
    payload = {"version": 1, "tree": _node_to_dict(root, include_gmm)}
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")


def lookup(root: CategoryNode, path) -> CategoryNode:
    """Descend from the root by child names; the root itself is not named.

    ``path`` is a sequence of names or a slash-separated string.
    """
    if isinstance(path, str):
        parts = split_category_path(path)
    else:
        parts = tuple(path)
    if not parts:
        raise InputValidationError("category path must be non-empty")
    node = root
    for name in parts:
        for child in node.children:
            if child.name == name:
                node = child
                break
        else:
            raise UnknownCategoryError(
                f"no category named {name!r} under {node.name!r}"
            )
    return node


def usable_leaves(root: CategoryNode) -> list[tuple[tuple[str, ...], CategoryNode]]:
    """Leaves with a fitted prior, paired with their path from the root."""
    found: list[tuple[tuple[str, ...], CategoryNode]] = []

    def walk(node: CategoryNode, trail: tuple[str, ...]):
        for child in node.children:
            path = trail + (child.name,)
            if child.is_leaf:
                if child.prior is not None:
                    found.append((path, child))
            else:
                walk(child, path)

    walk(root, ())
    return found
