"""Command-line interface.

Subcommands mirror the pipeline stages: synth (make a synthetic session),
build-dataset, train, analyze, report, and all (the full chain). Every
stage writes a run manifest (config hash, tool versions, timestamps) next
to its outputs.

Exit codes: 0 success, 2 configuration problem, 3 unusable input data,
4 video too short to harvest a trainable dataset, 5 backend failure.
"""

import datetime
import json
import platform
import sys
from pathlib import Path

import click
import yaml

from . import __version__
from .config import PipelineConfig
from .errors import (
    BackendError,
    CapacityExceeded,
    ConfigError,
    DatasetTooSmall,
    EmptyVideo,
    EngineUnavailable,
    ExamLensError,
    InferenceError,
    ModelLoadError,
    RosterError,
    TooShortVideo,
    UnreadableVideo,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_TOO_SHORT = 4
EXIT_BACKEND = 5


def _config_options(f):
    f = click.option(
        "--set",
        "-s",
        "overrides",
        multiple=True,
        metavar="KEY=VALUE",
        help="Override any config key by dotted path, e.g. -s train.epochs=3",
    )(f)
    f = click.option(
        "--config",
        "-c",
        "config_path",
        type=click.Path(dir_okay=False),
        default=None,
        help="YAML config file; flags beat the file, the file beats defaults.",
    )(f)
    return f


def _resolve_config(config_path: str | None, overrides: tuple[str, ...], flag_overrides: dict | None = None) -> PipelineConfig:
    cfg = PipelineConfig.load(config_path) if config_path else PipelineConfig()
    parsed: dict[str, object] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            parsed[key.strip()] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"could not parse override value {raw!r}: {exc}") from exc
    cfg = cfg.with_overrides(parsed)
    if flag_overrides:
        cfg = cfg.with_overrides({k: v for k, v in flag_overrides.items() if v is not None})
    return cfg


def _versions() -> dict:
    import cv2
    import numpy
    import skimage
    import torch

    return {
        "examlens": __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "opencv": cv2.__version__,
        "scikit-image": skimage.__version__,
        "torch": torch.__version__,
    }


def _write_run_manifest(out_dir: Path, command: str, cfg: PipelineConfig, inputs: dict, started: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "config_sha256": cfg.sha256(),
        "config": cfg.to_dict(),
        "inputs": inputs,
        "versions": _versions(),
        "started_utc": started,
        "finished_utc": _now(),
    }
    path = out_dir / f"run_manifest_{command}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


@click.group(name="examlens")
@click.version_option(version=__version__, prog_name="examlens")
def cli():
    """Gallery-exam video analysis: harvest faces, train, report presence."""


@cli.command()
@click.option("--script", "script_path", required=True, type=click.Path(dir_okay=False), help="Session script JSON.")
@click.option("--video", "video_out", required=True, type=click.Path(dir_okay=False), help="Output mp4 path.")
@click.option("--truth", "truth_out", required=True, type=click.Path(dir_okay=False), help="Output ground-truth JSON path.")
@click.option("--roster", "roster_out", default=None, type=click.Path(dir_okay=False), help="Also write the script's roster CSV here.")
def synth(script_path, video_out, truth_out, roster_out):
    """Generate a synthetic gallery session video plus ground truth."""
    from .model import save_roster
    from .synthgen import generate_video, load_script, roster_from_script

    script = load_script(script_path)
    video_path, gt_path = generate_video(script, video_out, truth_out)
    click.echo(f"wrote {video_path} ({script.frame_count} frames) and {gt_path}")
    if roster_out:
        save_roster(roster_from_script(script), roster_out)
        click.echo(f"wrote roster {roster_out}")


def _run_build_dataset(cfg: PipelineConfig, video: str, roster_path: str, out_root: Path) -> None:
    from .dataset import build_dataset, prune_small_classes, reconcile_with_roster, validate_dataset
    from .model import load_roster

    started = _now()
    roster = load_roster(roster_path)
    opts = cfg.build_options()
    ds_cfg = cfg.data["dataset"]

    ds, stats = build_dataset(video, out_root, opts)
    click.echo(
        f"harvested {stats.samples_saved} crops across {len(ds.classes)} raw classes "
        f"({stats.frames_scanned} frames, {stats.faces_detected} faces, {stats.ocr_failures} unreadable strips)"
    )
    ds, removed = prune_small_classes(ds, ds_cfg["min_class_count"])
    if removed:
        click.echo(f"pruned {len(removed)} small classes: {removed}")
    ds, report = reconcile_with_roster(ds, roster, ds_cfg["fuzzy_max_dist"])
    for raw, target in report.merged.items():
        click.echo(f"merged {raw!r} -> {target!r}")
    for amb in report.ambiguous:
        click.echo(f"ambiguous (dropped): {amb}")
    if report.dropped:
        click.echo(f"dropped non-roster classes: {report.dropped}")
    validate_dataset(ds, roster, ds_cfg["min_class_frac"], ds_cfg["min_class_count"])
    click.echo(f"dataset ready: {len(ds.classes)} classes, {ds.total_samples} samples at {out_root}")
    _write_run_manifest(out_root, "build-dataset", cfg, {"video": str(video), "roster": str(roster_path)}, started)


@cli.command("build-dataset")
@click.option("--video", required=True, type=click.Path(dir_okay=False), help="Gallery recording (decodable video file).")
@click.option("--roster", "roster_path", required=True, type=click.Path(dir_okay=False), help="Roster CSV (student_id,name).")
@click.option("--out", "out_root", required=True, type=click.Path(file_okay=False), help="Dataset output directory.")
@click.option("--rows", type=int, default=None, help="Grid rows (config grid.rows).")
@click.option("--cols", type=int, default=None, help="Grid cols (config grid.cols).")
@click.option("--workers", type=int, default=None, help="Harvest worker processes (config dataset.worker_count).")
@_config_options
def build_dataset_cmd(video, roster_path, out_root, rows, cols, workers, config_path, overrides):
    """Harvest a labeled face dataset from a recording."""
    cfg = _resolve_config(
        config_path,
        overrides,
        {"grid.rows": rows, "grid.cols": cols, "dataset.worker_count": workers},
    )
    _run_build_dataset(cfg, video, roster_path, Path(out_root))


def _run_train(cfg: PipelineConfig, dataset_root: str, model_prefix: Path) -> None:
    from .dataset import LabeledDataset
    from .recognize import evaluate, split_dataset, train

    started = _now()
    ds = LabeledDataset.load(dataset_root)
    tc = cfg.train_config()
    split = split_dataset(ds, seed=tc.seed)
    clf, history = train(ds, tc, split)
    test_acc = evaluate(clf, split.test, ds.root)
    model_path, manifest_path = clf.save(model_prefix)
    report = {
        "class_names": list(clf.class_names),
        "history": [{"train_loss": l, "val_accuracy": a} for l, a in history],
        "val_accuracy": history[-1][1],
        "test_accuracy": test_acc,
        "split_sizes": {"train": len(split.train), "val": len(split.val), "test": len(split.test)},
    }
    report_path = model_prefix.parent / "train_report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(
        f"trained {len(clf.class_names)} classes: val {history[-1][1]:.3f}, test {test_acc:.3f}; "
        f"saved {model_path} and {manifest_path}"
    )
    _write_run_manifest(model_prefix.parent, "train", cfg, {"dataset": str(dataset_root)}, started)


@cli.command()
@click.option("--dataset", "dataset_root", required=True, type=click.Path(file_okay=False), help="Dataset root from build-dataset.")
@click.option("--model", "model_prefix", required=True, type=click.Path(dir_okay=False), help="Output model path prefix (writes <prefix>.model and <prefix>.manifest.json).")
@click.option("--epochs", type=int, default=None, help="Training epochs (config train.epochs).")
@_config_options
def train(dataset_root, model_prefix, epochs, config_path, overrides):
    """Train the face recognizer on a harvested dataset."""
    cfg = _resolve_config(config_path, overrides, {"train.epochs": epochs})
    _run_train(cfg, dataset_root, Path(model_prefix))


def _run_analyze(cfg: PipelineConfig, video: str, model_prefix: str, out_dir: Path) -> None:
    from .analyze import events_to_csv
    from .analyze import analyze_video
    from .recognize import Classifier

    started = _now()
    clf = Classifier.load(model_prefix)
    acfg = cfg.analysis_config()
    events, meta = analyze_video(
        video,
        clf,
        acfg,
        detector=cfg.detector_spec(),
        crop_margin_frac=cfg.data["dataset"]["crop_margin_frac"],
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    events_to_csv(events, out_dir / "timeline.csv")
    total_seconds = max(1, -(-meta.frame_count // max(1, round(meta.fps))))
    meta_payload = {
        "video": str(video),
        "fps": meta.fps,
        "frame_count": meta.frame_count,
        "width": meta.width,
        "height": meta.height,
        "duration_s": total_seconds,
        "grid": [acfg.rows, acfg.cols],
        "model": str(model_prefix),
        "events": len(events),
    }
    with open(out_dir / "analysis_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta_payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"analyzed {total_seconds}s of video into {len(events)} events at {out_dir}")
    _write_run_manifest(out_dir, "analyze", cfg, {"video": str(video), "model": str(model_prefix)}, started)


@cli.command()
@click.option("--video", required=True, type=click.Path(dir_okay=False), help="Exam recording to analyze.")
@click.option("--model", "model_prefix", required=True, type=click.Path(dir_okay=False), help="Model path prefix from train.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory (timeline.csv, analysis_meta.json).")
@_config_options
def analyze(video, model_prefix, out_dir, config_path, overrides):
    """Detect and recognize faces second by second; write the event log."""
    cfg = _resolve_config(config_path, overrides)
    _run_analyze(cfg, video, model_prefix, Path(out_dir))


def _run_report(cfg: PipelineConfig, events_path: str, roster_path: str, duration_s: int | None, out_dir: Path) -> None:
    from .analyze import events_from_csv
    from .model import load_roster
    from .report import render_report

    started = _now()
    if duration_s is None:
        meta_path = Path(events_path).parent / "analysis_meta.json"
        if not meta_path.is_file():
            raise ConfigError("either --duration-s or an analysis_meta.json beside the events file is required")
        with open(meta_path, encoding="utf-8") as fh:
            duration_s = int(json.load(fh)["duration_s"])
    events = events_from_csv(events_path)
    roster = load_roster(roster_path)
    bundle = render_report(events, roster.names, cfg.analysis_config(), duration_s, out_dir)
    click.echo(f"report in {bundle.out_dir}: summary.json, timeline.csv, {len(bundle.chart_paths)} charts")
    _write_run_manifest(out_dir, "report", cfg, {"events": str(events_path), "roster": str(roster_path)}, started)


@cli.command()
@click.option("--events", "events_path", required=True, type=click.Path(dir_okay=False), help="timeline.csv from analyze.")
@click.option("--roster", "roster_path", required=True, type=click.Path(dir_okay=False), help="Roster CSV.")
@click.option("--duration-s", type=int, default=None, help="Video duration in seconds (read from analysis_meta.json when omitted).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Report output directory.")
@_config_options
def report(events_path, roster_path, duration_s, out_dir, config_path, overrides):
    """Render summary.json and charts from an event log."""
    cfg = _resolve_config(config_path, overrides)
    _run_report(cfg, events_path, roster_path, duration_s, Path(out_dir))


@cli.command("all")
@click.option("--video", required=True, type=click.Path(dir_okay=False), help="Gallery recording.")
@click.option("--roster", "roster_path", required=True, type=click.Path(dir_okay=False), help="Roster CSV.")
@click.option("--workdir", required=True, type=click.Path(file_okay=False), help="Directory for dataset/, model/, report/.")
@click.option("--workers", type=int, default=None, help="Harvest worker processes.")
@_config_options
def run_all(video, roster_path, workdir, workers, config_path, overrides):
    """Full pipeline: build-dataset, train, analyze, report."""
    cfg = _resolve_config(config_path, overrides, {"dataset.worker_count": workers})
    workdir = Path(workdir)
    dataset_root = workdir / "dataset"
    model_prefix = workdir / "model" / "recognizer"
    report_dir = workdir / "report"
    _run_build_dataset(cfg, video, roster_path, dataset_root)
    _run_train(cfg, str(dataset_root), model_prefix)
    _run_analyze(cfg, video, str(model_prefix), report_dir)
    with open(report_dir / "analysis_meta.json", encoding="utf-8") as fh:
        duration_s = int(json.load(fh)["duration_s"])
    _run_report(cfg, str(report_dir / "timeline.csv"), roster_path, duration_s, report_dir)
    click.echo(f"pipeline complete: {report_dir / 'summary.json'}")


_EXIT_BY_ERROR: list[tuple[type, int]] = [
    (ConfigError, EXIT_CONFIG),
    (TooShortVideo, EXIT_TOO_SHORT),
    (UnreadableVideo, EXIT_INPUT),
    (EmptyVideo, EXIT_INPUT),
    (RosterError, EXIT_INPUT),
    (DatasetTooSmall, EXIT_INPUT),
    (CapacityExceeded, EXIT_INPUT),
    (ModelLoadError, EXIT_BACKEND),
    (InferenceError, EXIT_BACKEND),
    (EngineUnavailable, EXIT_BACKEND),
    (BackendError, EXIT_BACKEND),
]


def main(argv: list[str] | None = None) -> int:
    """Entry point with exit-code mapping; returns instead of raising."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except click.Abort:
        click.echo("aborted", err=True)
        return 130
    except ExamLensError as exc:
        for err_type, code in _EXIT_BY_ERROR:
            if isinstance(exc, err_type):
                click.echo(f"error: {exc}", err=True)
                return code
        click.echo(f"error: {exc}", err=True)
        return EXIT_BACKEND
    except FileNotFoundError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
