"""Command-line harness: dataset synthesis, method runs, evaluation, comparison.

Run directory layout::

    static_map.pcd    cleaned map (binary PCD)
    label_mask.bin    one uint8 verdict per ground-truth point (0 static, 1 dynamic)
    timings.csv       frame_index, seconds (method compute only, no file I/O)
    run_manifest.json method, config hash, seed, dataset hash, effective params

``eval`` adds report.json, report.csv and fn_hist.csv next to them.
Diagnostics go to stderr; stdout carries only data and paths.
"""
from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from . import config as cfgmod
from .dataset import dataset_sha256, load_dataset, write_dataset
from .erasor import run_erasor
from .geometry import Pose
from .metrics import EvalReport, build_report
from .octomap import run_octomap
from .pcd_io import save_pcd
from .removert import run_removert
from .synth import PRESET_NAMES, SceneSpec, preset, simulate

MASK_NAME = "label_mask.bin"
STATIC_MAP_NAME = "static_map.pcd"
TIMINGS_NAME = "timings.csv"
RUN_MANIFEST_NAME = "run_manifest.json"


@click.group()
def main():
    """Dynamic-point removal benchmark harness."""


def _prepare_out_dir(out: Path, force: bool) -> Path:
    if out.exists() and any(out.iterdir()) and not force:
        raise click.ClickException(f"{out} exists and is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


@main.command()
@click.option("--preset", "preset_name", type=str, default=None, help="Named scene to generate.")
@click.option("--spec-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON scene specification (as written to dataset manifests).")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override the scene seed.")
@click.option("--force", is_flag=True, help="Overwrite a non-empty output directory.")
def synth(preset_name, spec_file, out, seed, force):
    """Generate a synthetic dataset (frames + labeled ground-truth map)."""
    if (preset_name is None) == (spec_file is None):
        raise click.ClickException("pass exactly one of --preset or --spec-file")
    if preset_name is not None:
        try:
            spec = preset(preset_name, seed=seed)
        except ValueError as exc:
            raise click.ClickException(str(exc))
    else:
        data = json.loads(Path(spec_file).read_text())
        if seed is not None:
            data["seed"] = seed
        spec = SceneSpec.from_dict(data)

    out = _prepare_out_dir(Path(out), force)
    frames, gt = simulate(spec)
    manifest = {
        "generator": "synth",
        "preset": preset_name,
        "seed": spec.seed,
        "n_frames": len(frames),
        "n_gt_points": len(gt),
        "spec": spec.to_dict(),
    }
    write_dataset(out, frames, gt, manifest, force=True)
    click.echo(str(out))


def _write_run(out: Path, static_points, mask, frame_times, manifest: dict) -> None:
    if static_points.shape[0] == 0:
        raise click.ClickException("method produced an empty static map; nothing to write")
    save_pcd(static_points, Pose.identity(), out / STATIC_MAP_NAME, "binary")
    (out / MASK_NAME).write_bytes(np.ascontiguousarray(mask, dtype=np.uint8).tobytes())
    lines = ["frame_index,seconds"]
    lines += [f"{i},{t:.9g}" for i, t in enumerate(frame_times)]
    (out / TIMINGS_NAME).write_text("\n".join(lines) + "\n")
    (out / RUN_MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@main.command()
@click.option("--method", required=True, type=click.Choice(cfgmod.METHODS))
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--force", is_flag=True)
def run(method, dataset_dir, config_path, out, seed, force):
    """Run one cleaning method over a dataset."""
    try:
        params = cfgmod.load_config(config_path)
    except cfgmod.ConfigError as exc:
        raise click.ClickException(str(exc))
    try:
        ds = load_dataset(dataset_dir, require_gt=True)
    except (FileNotFoundError, ValueError) as exc:
        raise click.ClickException(str(exc))
    out = _prepare_out_dir(Path(out), force)

    cfg = cfgmod.method_config(params, method, seed=seed)
    if method == "removert":
        result = run_removert(ds.frames, ds.gt, cfg)
        static_points = ds.gt.points[result.mask == 0]
    elif method == "erasor":
        result = run_erasor(ds.frames, ds.gt, cfg)
        static_points = ds.gt.points[result.mask == 0]
    else:
        result = run_octomap(ds.frames, cfg, reference=ds.gt)
        static_points = result.static_points

    manifest = {
        "method": method,
        "config_sha256": cfgmod.config_sha256(params[method]),
        "seed": seed,
        "dataset_sha256": dataset_sha256(ds.root),
        "params": params[method],
    }
    _write_run(out, static_points, result.mask, result.frame_times, manifest)
    click.echo(str(out))


def _load_run(run_dir: Path) -> dict:
    manifest_path = run_dir / RUN_MANIFEST_NAME
    if not manifest_path.exists():
        raise click.ClickException(f"{run_dir} has no {RUN_MANIFEST_NAME}")
    return json.loads(manifest_path.read_text())


@main.command("eval")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True, file_okay=False))
def eval_cmd(dataset_dir, run_dir):
    """Score a finished run against the dataset's ground truth."""
    run_dir = Path(run_dir)
    manifest = _load_run(run_dir)
    mask_path = run_dir / MASK_NAME
    if not mask_path.exists():
        raise click.ClickException(f"{run_dir} has no {MASK_NAME}")
    try:
        ds = load_dataset(dataset_dir, require_gt=True)
    except (FileNotFoundError, ValueError) as exc:
        raise click.ClickException(str(exc))
    mask = np.frombuffer(mask_path.read_bytes(), dtype=np.uint8)
    if mask.shape[0] != len(ds.gt):
        raise click.ClickException(
            f"mask has {mask.shape[0]} verdicts but ground truth has {len(ds.gt)} points"
        )
    timings = np.loadtxt(run_dir / TIMINGS_NAME, delimiter=",", skiprows=1, ndmin=2)
    try:
        report = build_report(manifest["method"], ds.gt, mask, timings[:, 1])
    except ValueError as exc:
        raise click.ClickException(str(exc))
    (run_dir / "report.json").write_text(report.to_json() + "\n")
    (run_dir / "report.csv").write_text(EvalReport.csv_header() + "\n" + report.csv_row() + "\n")
    (run_dir / "fn_hist.csv").write_text(report.fn_hist_csv())
    click.echo(str(run_dir / "report.json"))


@main.command()
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the table here instead of stdout.")
def compare(run_dirs, out):
    """Combine evaluated runs into one CSV table."""
    rows = []
    dataset_hashes = set()
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        manifest = _load_run(run_dir)
        report_path = run_dir / "report.json"
        if not report_path.exists():
            raise click.ClickException(f"{run_dir} has no report.json (run `mapclean eval` first)")
        report = json.loads(report_path.read_text())
        dataset_hashes.add(manifest["dataset_sha256"])
        method = manifest["method"]
        rows.append(
            f"{method},{report['sa']:.6f},{report['da']:.6f},{report['aa']:.6f},"
            f"{report['runtime_mean_s']:.9g},{report['runtime_std_s']:.9g},"
            f"{cfgmod.core_parameter_count(method)}"
        )
    if len(dataset_hashes) > 1:
        raise click.ClickException("runs come from different datasets; refusing to compare")
    table = "method,sa,da,aa,runtime_mean_s,runtime_std_s,n_parameters\n" + "\n".join(rows) + "\n"
    if out is None:
        click.echo(table, nl=False)
    else:
        Path(out).write_text(table)
        click.echo(str(out))


if __name__ == "__main__":
    main()
