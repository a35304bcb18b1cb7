"""Scene-bundle directory I/O.

A bundle is a directory with a ``manifest.json`` listing per-frame camera
poses and one CSV per frame (header ``instance,category,x,y,z``) holding the
instance-labeled points of that frame in reconstruction units.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import SceneFormatError
from .geometry import CameraPose, FrameObservation
from .priors import split_category_path

MANIFEST_NAME = "manifest.json"


def _pose_from_dict(raw: dict, where: str) -> CameraPose:
    try:
        R = np.asarray(raw["R"], dtype=np.float64).reshape(3, 3)
        t = np.asarray(raw["t"], dtype=np.float64)
        return CameraPose(
            rotation=R, translation=t,
            fx=float(raw["fx"]), fy=float(raw["fy"]),
            cx=float(raw["cx"]), cy=float(raw["cy"]),
            width=int(raw["width"]), height=int(raw["height"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"{where}: bad pose: {exc}") from exc


def _pose_to_dict(pose: CameraPose) -> dict:
    return {
        "R": [float(v) for v in pose.rotation.reshape(-1)],
        "t": [float(v) for v in pose.translation],
        "fx": pose.fx, "fy": pose.fy, "cx": pose.cx, "cy": pose.cy,
        "width": pose.width, "height": pose.height,
    }


def _read_frame_csv(path: Path) -> list[tuple[tuple[str, ...], np.ndarray]]:
    groups: dict[int, tuple[tuple[str, ...], list]] = {}
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["instance", "category", "x", "y", "z"]:
            raise SceneFormatError(f"{path.name}: expected header instance,category,x,y,z")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise SceneFormatError(f"{path.name}:{lineno}: expected 5 fields")
            try:
                inst = int(row[0])
                xyz = (float(row[2]), float(row[3]), float(row[4]))
            except ValueError as exc:
                raise SceneFormatError(f"{path.name}:{lineno}: {exc}") from exc
            category = split_category_path(row[1])
            if inst in groups:
                if groups[inst][0] != category:
                    raise SceneFormatError(
                        f"{path.name}:{lineno}: instance {inst} has conflicting categories"
                    )
                groups[inst][1].append(xyz)
            else:
                groups[inst] = (category, [xyz])
    return [
        (category, np.asarray(pts, dtype=np.float64))
        for _, (category, pts) in sorted(groups.items())
    ]


def read_scene(directory) -> list[FrameObservation]:
    """Load a bundle directory into frames sorted by frame id."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise SceneFormatError(f"cannot read {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{manifest_path} is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("version") != 1:
        raise SceneFormatError(f"{manifest_path} must have version 1")
    frames = []
    seen_ids = set()
    for raw in manifest.get("frames", []):
        frame_id = raw.get("id")
        if not isinstance(frame_id, int):
            raise SceneFormatError("manifest frame entry is missing an integer id")
        if frame_id in seen_ids:
            raise SceneFormatError(f"duplicate frame id {frame_id}")
        seen_ids.add(frame_id)
        pose = _pose_from_dict(raw.get("pose", {}), f"frame {frame_id}")
        cloud_name = raw.get("cloud")
        if not isinstance(cloud_name, str):
            raise SceneFormatError(f"frame {frame_id}: missing cloud file name")
        cloud_path = directory / cloud_name
        if not cloud_path.is_file():
            raise SceneFormatError(f"frame {frame_id}: missing cloud file {cloud_name}")
        instances = _read_frame_csv(cloud_path)
        frames.append(FrameObservation(frame_id=frame_id, pose=pose, instances=tuple(instances)))
    frames.sort(key=lambda f: f.frame_id)
    return frames


def write_scene(directory, frames) -> None:
    """Write frames as a bundle directory (creates it if needed)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for frame in frames:
        cloud_name = f"frame_{frame.frame_id}.csv"
        with (directory / cloud_name).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["instance", "category", "x", "y", "z"])
            for inst_id, (category, points) in enumerate(frame.instances):
                cat = "/".join(category)
                for x, y, z in points:
                    writer.writerow([inst_id, cat, repr(float(x)), repr(float(y)), repr(float(z))])
        entries.append({
            "id": frame.frame_id,
            "pose": _pose_to_dict(frame.pose),
            "cloud": cloud_name,
        })
    manifest = {"version": 1, "frames": entries}
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1), encoding="utf-8")
