#!/usr/bin/env python3
"""Regenerate the bundled sample priors file.

Synthesizes plausible catalog-style size samples (millimeters) for a small
tree of everyday categories and writes src/metricscale/data/sample_priors.json.
Run from the repository root:

    python3 scripts/make_sample_priors.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

SEED = 20240817
N_PER_LEAF = 80

# name -> (dim_mask, modes); each mode: (weight, (mu_w, mu_l, mu_h), (sd_w, sd_l, sd_h))
LEAVES = {
    "furniture": {
        "chair": (("w", "l", "h"), [(1.0, (470, 520, 880), (40, 45, 60))]),
        "table": (("w", "l", "h"), [(1.0, (800, 1400, 745), (80, 150, 30))]),
        "stool": (("w", "l", "h"), [(1.0, (340, 350, 450), (30, 30, 40))]),
    },
    "electronics": {
        "laptop": (("w", "l", "h"), [(1.0, (225, 330, 19), (18, 25, 4))]),
        "monitor": (("w", "l", "h"), [(1.0, (185, 560, 420), (30, 55, 40))]),
        "keyboard": (("w", "l"), [(1.0, (140, 440, 0), (14, 30, 1))]),
        "mouse": (("w", "l", "h"), [(1.0, (62, 112, 38), (6, 9, 4))]),
    },
    "kitchenware": {
        "bottle": (
            ("w", "l", "h"),
            [
                (0.6, (68, 70, 235), (6, 6, 18)),
                (0.4, (78, 80, 305), (6, 6, 14)),
            ],
        ),
        "mug": (("w", "l", "h"), [(1.0, (84, 112, 95), (7, 9, 9))]),
        "plate": (("w", "l", "h"), [(1.0, (252, 256, 26), (22, 22, 5))]),
    },
    "stationery": {
        "book": (("w", "l", "h"), [(1.0, (152, 230, 28), (14, 18, 8))]),
        "notebook": (("w", "l", "h"), [(1.0, (148, 210, 13), (10, 12, 3))]),
    },
    "appliance": {
        "trash_bin": (("w", "l", "h"), [(1.0, (252, 258, 310), (24, 24, 50))]),
    },
    None: {  # leaves hanging directly off the root
        "person": (
            ("h",),
            [
                (0.5, (0, 0, 1620), (1, 1, 55)),
                (0.5, (0, 0, 1765), (1, 1, 60)),
            ],
        ),
    },
}


def draw_leaf_samples(rng, mask, modes, n):
    rows = []
    weights = np.array([m[0] for m in modes])
    weights = weights / weights.sum()
    picks = rng.choice(len(modes), size=n, p=weights)
    for k in picks:
        _, mu, sd = modes[k]
        vals = rng.normal(mu, sd)
        vals = np.maximum(vals, 5.0)
        if "w" in mask and "l" in mask and vals[0] > vals[1]:
            vals[0], vals[1] = vals[1], vals[0]  # convention: length >= width
        row = [
            round(float(vals[i]), 1) if tag in mask else None
            for i, tag in enumerate(("w", "l", "h"))
        ]
        rows.append(row)
    return rows


def main():
    rng = np.random.default_rng(SEED)
    children = []
    for group, leaves in LEAVES.items():
        leaf_nodes = []
        for name, (mask, modes) in leaves.items():
            leaf_nodes.append(
                {
                    "name": name,
                    "dim_mask": list(mask),
                    "samples": draw_leaf_samples(rng, mask, modes, N_PER_LEAF),
                }
            )
        if group is None:
            children.extend(leaf_nodes)
        else:
            children.append(
                {
                    "name": group,
                    "dim_mask": ["w", "l", "h"],
                    "samples": [],
                    "children": leaf_nodes,
                }
            )
    tree = {
        "name": "object",
        "dim_mask": ["w", "l", "h"],
        "samples": [],
        "children": children,
    }
    out = Path(__file__).resolve().parents[1] / "src" / "metricscale" / "data" / "sample_priors.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"version": 1, "tree": tree}, indent=1), encoding="utf-8")
    n_leaves = sum(len(v) for v in LEAVES.values())
    print(f"wrote {out} ({n_leaves} leaf categories, {N_PER_LEAF} samples each)")


if __name__ == "__main__":
    main()
