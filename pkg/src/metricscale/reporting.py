"""Deterministic serialization for machine-readable reports.

Reports must be byte-identical for identical inputs and seeds, so floats
are rendered with a fixed 17-significant-digit format instead of the
default shortest-roundtrip repr, and key order is always insertion order.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import InputValidationError


def format_float(x: float) -> str:
    if not np.isfinite(x):
        raise InputValidationError(f"reports cannot contain non-finite numbers, got {x!r}")
    return f"{float(x):.17g}"


def dumps_json(obj, indent: int = 1) -> str:
    """JSON text with %.17g floats; supports dict/list/str/int/float/bool/None."""
    pieces: list[str] = []
    _write(obj, pieces, indent, 0)
    return "".join(pieces) + "\n"


def _write(obj, out: list[str], indent: int, depth: int) -> None:
    pad = " " * (indent * (depth + 1))
    end_pad = " " * (indent * depth)
    if obj is None or isinstance(obj, bool):
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, value) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise InputValidationError(f"report keys must be strings, got {key!r}")
            out.append(f"{pad}{json.dumps(key)}: ")
            _write(value, out, indent, depth + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(f"{end_pad}}}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = list(obj)
        if not items:
            out.append("[]")
            return
        out.append("[\n")
        for i, value in enumerate(items):
            out.append(pad)
            _write(value, out, indent, depth + 1)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(f"{end_pad}]")
    else:
        raise InputValidationError(f"cannot serialize {type(obj).__name__} into a report")


def downsample_curve(s_values: np.ndarray, log_likelihoods: np.ndarray, max_points: int = 1000):
    """Thin the likelihood curve evenly, always keeping the argmax row."""
    n = len(s_values)
    if n <= max_points:
        idx = np.arange(n)
    else:
        idx = np.unique(np.linspace(0, n - 1, max_points).round().astype(int))
        peak = int(np.argmax(log_likelihoods))
        if peak not in idx:
            idx = np.unique(np.append(idx, peak))
    return [[float(s_values[i]), float(log_likelihoods[i])] for i in idx]
