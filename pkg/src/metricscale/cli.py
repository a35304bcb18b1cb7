"""Command-line interface.

Subcommands cover the full pipeline (estimate), its stages (merge, dims),
priors maintenance (fit-priors), the synthetic experiment harness
(simulate, simulate-ablation, gen-scene) and report post-processing
(curve). Exit codes: 0 success, 10 I/O or format error, 11 no usable
objects, 12 degenerate camera trajectory, 13 invalid input, 2 usage error.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
import time
from importlib import resources
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bundle import read_scene, write_scene
from .dimensions import estimate_up_vector, measure_object
from .errors import (
    DegenerateGeometryError,
    DegenerateUpVectorError,
    InputValidationError,
    MetricScaleError,
    NoObjectsError,
    PlacementError,
    PriorsFormatError,
    SceneFormatError,
    UnknownCategoryError,
)
from .merging import merge_scene
from .pipeline import PipelineConfig, build_report, run_pipeline
from .priors import load_repository, save_repository
from .reporting import dumps_json, format_float
from .simulate import (
    ablation_bbox_vs_extraction,
    generate_scene,
    run_trials,
    scene_to_frames,
)

EXIT_OK = 0
EXIT_IO_ERROR = 10
EXIT_NO_OBJECTS = 11
EXIT_DEGENERATE_UP = 12
EXIT_INVALID_INPUT = 13

_EXIT_CODES = (
    (NoObjectsError, EXIT_NO_OBJECTS),
    (DegenerateUpVectorError, EXIT_DEGENERATE_UP),
    ((SceneFormatError, PriorsFormatError, OSError), EXIT_IO_ERROR),
    (
        (InputValidationError, UnknownCategoryError, DegenerateGeometryError,
         PlacementError, MetricScaleError),
        EXIT_INVALID_INPUT,
    ),
)


def _handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
            for exc_types, code in _EXIT_CODES:
                if isinstance(exc, exc_types):
                    click.echo(f"error: {exc}", err=True)
                    sys.exit(code)
            raise

    return wrapper


def default_priors_path() -> Path:
    """Path of the bundled sample priors repository."""
    return Path(resources.files("metricscale").joinpath("data/sample_priors.json"))


def _echo(ctx, message: str) -> None:
    if not ctx.obj.get("quiet"):
        click.echo(message)


@click.group(name="metricscale")
@click.version_option(__version__)
@click.option("--seed", type=int, default=0, show_default=True, help="Global random seed.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker threads for simulation commands.")
@click.option("--quiet", is_flag=True, help="Suppress progress and summary output.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON file with per-command defaults, e.g. {\"estimate\": {\"conf_threshold\": 0.8}}.")
@click.pass_context
def main(ctx, seed, threads, quiet, config_path):
    """Metric scale recovery from instance-labeled point clouds."""
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, threads=threads, quiet=quiet)
    if config_path:
        try:
            overrides = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise click.UsageError(f"--config is not valid JSON: {exc}") from exc
        if not isinstance(overrides, dict):
            raise click.UsageError("--config must hold an object of per-command sections")
        ctx.default_map = overrides


def _priors_option(func):
    return click.option(
        "--priors", "priors_path", type=click.Path(dir_okay=False),
        default=str(default_priors_path()), show_default=False,
        help="Priors repository JSON (defaults to the bundled sample).",
    )(func)


@main.command()
@click.option("--scene", "scene_dir", type=click.Path(file_okay=False), required=True,
              help="Scene bundle directory.")
@_priors_option
@click.option("--smin", type=float, default=None, help="Scale window lower bound (mm/unit).")
@click.option("--smax", type=float, default=None, help="Scale window upper bound (mm/unit).")
@click.option("--ds", type=float, default=None, help="Scale grid step (mm/unit).")
@click.option("--auto-window", is_flag=True,
              help="Derive the window from prior candidates (default when no explicit window).")
@click.option("--conf-threshold", type=float, default=0.7, show_default=True)
@click.option("--threshold-frac", type=float, default=0.02, show_default=True,
              help="Merge threshold as a fraction of the scene bbox diagonal.")
@click.option("--min-points", type=int, default=50, show_default=True)
@click.option("--contamination", type=float, default=0.02, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="report.json",
              show_default=True)
@click.pass_context
@_handle_errors
def estimate(ctx, scene_dir, priors_path, smin, smax, ds, auto_window, conf_threshold,
             threshold_frac, min_points, contamination, out_path):
    """Run the full pipeline on a scene bundle and write report.json."""
    if auto_window and smin is not None:
        raise click.UsageError("give either --auto-window or an explicit --smin/--smax/--ds")
    seed = ctx.obj["seed"]
    timings = {}
    t0 = time.perf_counter()
    repo = load_repository(priors_path, seed=seed)
    frames = read_scene(scene_dir)
    timings["load"] = time.perf_counter() - t0

    config = PipelineConfig(
        merge_threshold_frac=threshold_frac,
        min_points=min_points,
        contamination=contamination,
        conf_threshold=conf_threshold,
        s_min=smin, s_max=smax, ds=ds,
        seed=seed,
    )
    result = run_pipeline(frames, repo, config)
    timings.update(result.timings)

    report = build_report(result, config)
    Path(out_path).write_text(dumps_json(report), encoding="utf-8")
    timing_path = Path(out_path).with_suffix(Path(out_path).suffix + ".timings.json")
    timing_path.write_text(json.dumps({k: round(v, 6) for k, v in timings.items()}, indent=1),
                           encoding="utf-8")

    est = result.estimate
    _echo(ctx, f"scale: {est.s_hat:.6g} mm/unit (refined {est.s_refined:.6g})")
    _echo(ctx, f"window: [{est.s_min:.6g}, {est.s_max:.6g}] step {est.ds:.3g}")
    _echo(ctx, f"objects used: {len(result.used_objects)}/{len(result.objects)}"
               f" (dropped {len(result.dropped)})")
    for obj_id, reason in result.dropped:
        _echo(ctx, f"  dropped object {obj_id}: {reason}")
    _echo(ctx, "stage timings: " + ", ".join(f"{k} {v:.3f}s" for k, v in timings.items()))
    _echo(ctx, f"report written to {out_path}")


@main.command()
@click.option("--scene", "scene_dir", type=click.Path(file_okay=False), required=True)
@click.option("--threshold-frac", type=float, default=0.02, show_default=True)
@click.option("--threshold", type=float, default=None,
              help="Absolute merge threshold in reconstruction units (overrides the fraction).")
@click.option("--min-points", type=int, default=50, show_default=True)
@click.option("--contamination", type=float, default=0.02, show_default=True)
@click.option("--points/--no-points", "include_points", default=False,
              help="Include raw point coordinates in the output.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="objects.json",
              show_default=True)
@click.pass_context
@_handle_errors
def merge(ctx, scene_dir, threshold_frac, threshold, min_points, contamination,
          include_points, out_path):
    """Merge per-frame instances into per-object clouds."""
    frames = read_scene(scene_dir)
    objects = merge_scene(
        frames, threshold=threshold, threshold_frac=threshold_frac,
        min_points=min_points, contamination=contamination, seed=ctx.obj["seed"],
    )
    entries = []
    for i, obj in enumerate(objects):
        entry = {
            "id": i,
            "category": "/".join(obj.category_path),
            "n_points": int(obj.points.shape[0]),
            "source_frames": sorted(obj.source_frames),
        }
        if include_points:
            entry["points"] = [list(p) for p in obj.points]
        entries.append(entry)
    Path(out_path).write_text(dumps_json({"version": 1, "objects": entries}), encoding="utf-8")
    _echo(ctx, f"{len(objects)} objects written to {out_path}")


@main.command()
@click.option("--scene", "scene_dir", type=click.Path(file_okay=False), required=True,
              help="Scene bundle (for the camera trajectory).")
@click.option("--objects", "objects_path", type=click.Path(dir_okay=False), required=True,
              help="objects.json produced by 'merge --points'.")
@click.option("--conf-threshold", type=float, default=0.7, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="dims.json",
              show_default=True)
@click.pass_context
@_handle_errors
def dims(ctx, scene_dir, objects_path, conf_threshold, out_path):
    """Extract per-object dimensions, confidences and reliability flags."""
    frames = read_scene(scene_dir)
    try:
        payload = json.loads(Path(objects_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{objects_path} is not valid JSON: {exc}") from exc
    if payload.get("version") != 1 or "objects" not in payload:
        raise SceneFormatError(f"{objects_path} is not a version-1 objects file")
    up = estimate_up_vector(f.pose for f in frames)
    entries = []
    for raw in payload["objects"]:
        if "points" not in raw:
            raise SceneFormatError(
                "objects file has no point coordinates; rerun 'merge' with --points"
            )
        est = measure_object(
            np.asarray(raw["points"], dtype=np.float64), up, conf_threshold=conf_threshold
        )
        entries.append({
            "id": raw.get("id"),
            "category": raw.get("category", ""),
            "dims_wlh": [est.width, est.length, est.height],
            "eta_xyz": list(est.eta),
            "reliable_xyz": [bool(v) for v in est.reliable],
        })
    out = {"version": 1, "conf_threshold": conf_threshold,
           "up_vector": list(up), "objects": entries}
    Path(out_path).write_text(dumps_json(out), encoding="utf-8")
    _echo(ctx, f"dimensions for {len(entries)} objects written to {out_path}")


@main.command(name="fit-priors")
@_priors_option
@click.option("--max-components", type=int, default=3, show_default=True)
@click.option("--min-samples", type=int, default=10, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.pass_context
@_handle_errors
def fit_priors(ctx, priors_path, max_components, min_samples, out_path):
    """Fit size mixtures for every node and write the repository back."""
    repo = load_repository(
        priors_path, max_components=max_components, min_samples=min_samples,
        seed=ctx.obj["seed"],
    )
    save_repository(repo, out_path, include_gmm=True)
    fitted = sum(1 for node in repo.iter_nodes() if node.prior is not None)
    _echo(ctx, f"wrote {out_path} with {fitted} fitted priors")


def _parse_list(raw: str, cast, name: str):
    try:
        return [cast(tok) for tok in raw.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise click.UsageError(f"--{name} must be a comma-separated list: {exc}") from exc


@main.command()
@_priors_option
@click.option("--n-list", default="1,2,5,10", show_default=True,
              help="Comma-separated object counts.")
@click.option("--r-list", default="0,0.03,0.06,0.09,0.12,0.15", show_default=True,
              help="Comma-separated size-disturbance bounds.")
@click.option("--trials", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=None, help="Override the global seed.")
@click.option("--points-per-object", type=int, default=5000, show_default=True)
@click.option("--conf-threshold", type=float, default=0.7, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="trials.csv",
              show_default=True)
@click.pass_context
@_handle_errors
def simulate(ctx, priors_path, n_list, r_list, trials, seed, points_per_object,
             conf_threshold, out_path):
    """Monte Carlo scale-error sweep over object counts and disturbances."""
    seed = ctx.obj["seed"] if seed is None else seed
    repo = load_repository(priors_path, seed=seed)
    reports = run_trials(
        repo,
        _parse_list(n_list, int, "n-list"),
        _parse_list(r_list, float, "r-list"),
        trials,
        seed=seed,
        conf_threshold=conf_threshold,
        n_points=points_per_object,
        threads=ctx.obj["threads"],
    )
    with Path(out_path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["N", "R", "trial", "rel_error"])
        for rep in reports:
            for t, err in enumerate(rep.errors):
                writer.writerow(
                    [rep.n_objects, format_float(rep.disturbance), t,
                     "nan" if np.isnan(err) else format_float(err)]
                )
    _echo(ctx, f"{'N':>4} {'R':>6} {'median':>9} {'mean':>9} {'std':>9} {'failed':>6}")
    for rep in reports:
        _echo(ctx, f"{rep.n_objects:>4} {rep.disturbance:>6.2f} {rep.median:>9.4f} "
                   f"{rep.mean:>9.4f} {rep.std:>9.4f} {rep.n_failed:>6}")
    _echo(ctx, f"per-trial errors written to {out_path}")


@main.command(name="simulate-ablation")
@_priors_option
@click.option("--truncation", type=float, default=0.4, show_default=True)
@click.option("--trials", type=int, default=200, show_default=True)
@click.option("--n-objects", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=None, help="Override the global seed.")
@click.option("--points-per-object", type=int, default=5000, show_default=True)
@click.option("--conf-threshold", type=float, default=0.7, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="ablation.csv",
              show_default=True)
@click.pass_context
@_handle_errors
def simulate_ablation(ctx, priors_path, truncation, trials, n_objects, seed,
                      points_per_object, conf_threshold, out_path):
    """Compare raw-bounding-box and confidence-filtered estimation."""
    seed = ctx.obj["seed"] if seed is None else seed
    repo = load_repository(priors_path, seed=seed)
    report = ablation_bbox_vs_extraction(
        repo, trials, truncation, seed=seed,
        n_objects=n_objects, conf_threshold=conf_threshold,
        n_points=points_per_object, threads=ctx.obj["threads"],
    )
    with Path(out_path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["trial", "err_full_bbox", "err_confidence_filtered"])
        for t in range(report.trials):
            writer.writerow([
                t,
                format_float(report.errors_full_bbox[t]),
                format_float(report.errors_filtered[t]),
            ])
    ratio = report.mean_full_bbox / report.mean_filtered if report.mean_filtered else float("inf")
    _echo(ctx, f"mean error, full bbox:            {report.mean_full_bbox:.4f}")
    _echo(ctx, f"mean error, confidence filtered:  {report.mean_filtered:.4f}")
    _echo(ctx, f"ratio: {ratio:.2f}x; per-trial errors written to {out_path}")


@main.command(name="gen-scene")
@_priors_option
@click.option("--n-objects", type=int, default=5, show_default=True)
@click.option("--true-scale", type=float, default=8.0, show_default=True,
              help="Ground-truth mm per reconstruction unit.")
@click.option("--frames", "n_frames", type=int, default=5, show_default=True)
@click.option("--truncation", type=float, default=None)
@click.option("--truncation-axis", type=click.Choice(["w", "l", "h"]), default=None)
@click.option("--points-per-object", type=int, default=5000, show_default=True)
@click.option("--seed", type=int, default=None, help="Override the global seed.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.pass_context
@_handle_errors
def gen_scene(ctx, priors_path, n_objects, true_scale, n_frames, truncation,
              truncation_axis, points_per_object, seed, out_dir):
    """Write a synthetic scene bundle plus its ground truth."""
    seed = ctx.obj["seed"] if seed is None else seed
    repo = load_repository(priors_path, seed=seed)
    scene = generate_scene(
        repo, n_objects, true_scale,
        truncation=truncation, truncation_axis=truncation_axis,
        seed=seed, n_points=points_per_object,
    )
    frames = scene_to_frames(scene, n_frames, seed=seed)
    write_scene(out_dir, frames)
    truth = {
        "version": 1,
        "true_scale_mm_per_unit": scene.true_scale,
        "seed": seed,
        "objects": [
            {
                "category": "/".join(obj.category_path),
                "true_dims_wlh_mm": list(obj.true_dims_mm),
                "shape": obj.shape,
                "truncated_axis": obj.truncated_axis,
            }
            for obj in scene.objects
        ],
    }
    (Path(out_dir) / "truth.json").write_text(dumps_json(truth), encoding="utf-8")
    _echo(ctx, f"scene bundle with {n_objects} objects over {n_frames} frames "
               f"written to {out_dir}")


@main.command()
@click.option("--report", "report_path", type=click.Path(dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="curve.csv",
              show_default=True)
@click.pass_context
@_handle_errors
def curve(ctx, report_path, out_path):
    """Export the likelihood curve of a report as CSV for plotting."""
    try:
        payload = json.loads(Path(report_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{report_path} is not valid JSON: {exc}") from exc
    if payload.get("version") != 1 or "curve" not in payload:
        raise SceneFormatError(f"{report_path} is not a version-1 report")
    with Path(out_path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["s", "log_likelihood"])
        for s, ll in payload["curve"]:
            writer.writerow([format_float(s), format_float(ll)])
    _echo(ctx, f"{len(payload['curve'])} curve rows written to {out_path}")


if __name__ == "__main__":
    main()
