"""Labeled face-dataset harvesting from a gallery recording.

For every sampled frame, each grid cell is checked for a face; when one is
found, the cell's name strip is transcribed and the face crop is filed under
that raw name. Raw names are weak labels: small classes get pruned, then the
survivors are reconciled against the official roster (exact, then substring,
then fuzzy edit-distance match, then dropped).

The on-disk layout is one directory per class under the dataset root plus a
manifest.json describing every sample. The manifest is written only by the
coordinating process and is byte-deterministic for a given video and
configuration, regardless of worker count.
"""

import json
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace
from multiprocessing import get_context
from pathlib import Path

import cv2

from . import _kernels
from .detect import DetectorSpec, best_detection, crop_face, detect_faces
from .errors import AmbiguousMatch, TooShortVideo
from .model import GridLayout, Roster, cell_linear_index, normalize_name, partition_frame, second_of_frame
from .ocr import NameStripSpec, OcrConfig, read_name
from .video import iter_sampled, probe_video

MANIFEST_NAME = "manifest.json"
MANIFEST_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class BuildOptions:
    rows: int = 5
    cols: int = 5
    sample_every_n: int | None = None  # None: one frame per second (round(fps))
    worker_count: int = 1
    crop_margin_frac: float = 0.25
    strip: NameStripSpec = field(default_factory=NameStripSpec)
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    ocr: OcrConfig = field(default_factory=OcrConfig)

    def __post_init__(self):
        if self.worker_count < 1:
            raise ValueError(f"worker_count must be >= 1, got {self.worker_count}")
        if self.sample_every_n is not None and self.sample_every_n < 1:
            raise ValueError(f"sample_every_n must be >= 1, got {self.sample_every_n}")
        if self.crop_margin_frac < 0:
            raise ValueError(f"crop_margin_frac must be >= 0, got {self.crop_margin_frac}")


@dataclass(frozen=True)
class FaceSample:
    """One harvested face crop; image_ref is relative to the dataset root."""

    image_ref: str
    label: str
    frame_index: int
    second: int
    row: int
    col: int
    confidence: float


@dataclass
class BuildStats:
    frames_scanned: int = 0
    cells_scanned: int = 0
    faces_detected: int = 0
    ocr_failures: int = 0
    samples_saved: int = 0


@dataclass
class LabeledDataset:
    """Face crops grouped by class label, rooted at a directory."""

    root: Path
    classes: dict[str, list[FaceSample]]

    @property
    def labels(self) -> list[str]:
        return sorted(self.classes)

    def count(self, label: str) -> int:
        return len(self.classes.get(label, []))

    @property
    def total_samples(self) -> int:
        return sum(len(v) for v in self.classes.values())

    def all_samples(self) -> list[FaceSample]:
        out = []
        for label in self.labels:
            out.extend(self.classes[label])
        return out

    def save_manifest(self, extra: dict | None = None) -> Path:
        payload = {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "classes": {
                label: [asdict(s) for s in sorted(self.classes[label], key=_sample_key)]
                for label in self.labels
            },
        }
        if extra:
            payload.update(extra)
        path = Path(self.root) / MANIFEST_NAME
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, root: str | Path) -> "LabeledDataset":
        root = Path(root)
        path = root / MANIFEST_NAME
        if not path.is_file():
            raise FileNotFoundError(f"no dataset manifest at {path}")
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        classes = {
            label: [FaceSample(**s) for s in samples]
            for label, samples in payload["classes"].items()
        }
        return cls(root=root, classes=classes)


def _sample_key(s: FaceSample):
    return (s.frame_index, s.row, s.col)


def _label_dir(label: str) -> str:
    # labels are cleaned names (letters, space, - and '); keep paths readable
    return label.replace(" ", "_").replace("'", "")


def _harvest_chunk(args: dict) -> tuple[list[dict], dict]:
    """Worker body: harvest one contiguous run of sampled frames.

    Runs in a separate process for worker_count > 1, or inline. Appends
    nothing shared: crops are written to per-class directories (unique file
    names) and sample metadata is returned to the coordinator.
    """
    video_path = args["video_path"]
    indices: list[int] = args["indices"]
    fps: float = args["fps"]
    opts: BuildOptions = args["opts"]
    out_root = Path(args["out_root"])

    samples: list[dict] = []
    stats = {"frames_scanned": 0, "cells_scanned": 0, "faces_detected": 0, "ocr_failures": 0}
    if not indices:
        return samples, stats

    meta = probe_video(video_path)
    layout = GridLayout(opts.rows, opts.cols, meta.width, meta.height)
    rects = partition_frame(layout)
    name_cache: dict[tuple[int, int], str | None] = {}

    cap = cv2.VideoCapture(video_path)
    try:
        if indices[0] > 0:
            cap.set(cv2.CAP_PROP_POS_FRAMES, indices[0])
        pos = indices[0]
        for idx in indices:
            while pos < idx:
                if not cap.grab():
                    return samples, stats
                pos += 1
            ok, frame = cap.read()
            if not ok:
                return samples, stats
            pos += 1
            stats["frames_scanned"] += 1
            second = second_of_frame(idx, fps)
            for cell, rect in rects.items():
                stats["cells_scanned"] += 1
                cell_img = frame[rect.y : rect.y2, rect.x : rect.x2]
                det = best_detection(detect_faces(cell_img, opts.detector))
                if det is None:
                    continue
                stats["faces_detected"] += 1
                cache_key = (cell_linear_index(cell, layout), second)
                if cache_key not in name_cache:
                    name_cache[cache_key] = read_name(cell_img, opts.strip, opts.ocr)
                label = name_cache[cache_key]
                if label is None:
                    stats["ocr_failures"] += 1
                    continue
                crop = crop_face(cell_img, det, opts.crop_margin_frac)
                rel = f"{_label_dir(label)}/f{idx:06d}_r{cell.row}c{cell.col}.png"
                dest = out_root / rel
                dest.parent.mkdir(parents=True, exist_ok=True)
                cv2.imwrite(str(dest), crop)
                samples.append(
                    {
                        "image_ref": rel,
                        "label": label,
                        "frame_index": idx,
                        "second": second,
                        "row": cell.row,
                        "col": cell.col,
                        "confidence": round(det.confidence, 6),
                    }
                )
    finally:
        cap.release()
    return samples, stats


def build_dataset(
    video_path: str | Path, out_root: str | Path, opts: BuildOptions = BuildOptions()
) -> tuple[LabeledDataset, BuildStats]:
    """Harvest a labeled dataset from a gallery recording.

    Sampling is one frame per second unless sample_every_n overrides it.
    With worker_count > 1 the sampled frames are split into contiguous
    chunks on second boundaries and harvested by separate processes; the
    resulting sample set is identical to a single-worker run.
    """
    video_path = str(video_path)
    out_root = Path(out_root)
    meta = probe_video(video_path)
    every_n = opts.sample_every_n or max(1, round(meta.fps))
    sampled = list(range(0, meta.frame_count, every_n))

    # chunk on second boundaries so per-(cell, second) OCR caching cannot
    # depend on where chunks split
    by_second: dict[int, list[int]] = {}
    for idx in sampled:
        by_second.setdefault(second_of_frame(idx, meta.fps), []).append(idx)
    seconds = sorted(by_second)
    n_chunks = min(opts.worker_count, max(1, len(seconds)))
    base, rem = divmod(len(seconds), n_chunks)
    chunks: list[list[int]] = []
    at = 0
    for i in range(n_chunks):
        take = base + (1 if i < rem else 0)
        chunk_seconds = seconds[at : at + take]
        at += take
        chunks.append([idx for s in chunk_seconds for idx in by_second[s]])

    out_root.mkdir(parents=True, exist_ok=True)
    jobs = [
        {"video_path": video_path, "indices": chunk, "fps": meta.fps, "opts": opts, "out_root": str(out_root)}
        for chunk in chunks
        if chunk
    ]

    results: list[tuple[list[dict], dict]] = []
    if opts.worker_count == 1 or len(jobs) <= 1:
        for job in jobs:
            results.append(_harvest_chunk(job))
    else:
        with ProcessPoolExecutor(max_workers=len(jobs), mp_context=get_context("spawn")) as pool:
            results = list(pool.map(_harvest_chunk, jobs))

    stats = BuildStats(frames_scanned=0)
    classes: dict[str, list[FaceSample]] = {}
    for sample_dicts, partial in results:
        stats.frames_scanned += partial["frames_scanned"]
        stats.cells_scanned += partial["cells_scanned"]
        stats.faces_detected += partial["faces_detected"]
        stats.ocr_failures += partial["ocr_failures"]
        for d in sample_dicts:
            classes.setdefault(d["label"], []).append(FaceSample(**d))
    for label in classes:
        classes[label].sort(key=_sample_key)
    stats.samples_saved = sum(len(v) for v in classes.values())

    ds = LabeledDataset(root=out_root, classes=classes)
    ds.save_manifest(_manifest_extra(video_path, meta.fps, every_n, opts))
    return ds, stats


def _manifest_extra(video_path: str, fps: float, every_n: int, opts: BuildOptions) -> dict:
    return {
        "video": video_path,
        "fps": fps,
        "sample_every_n": every_n,
        "grid": [opts.rows, opts.cols],
        "crop_margin_frac": opts.crop_margin_frac,
        "detector_kind": opts.detector.kind,
        "ocr_engine": opts.ocr.engine,
    }


def prune_small_classes(
    ds: LabeledDataset, min_count: int = 100
) -> tuple[LabeledDataset, dict[str, int]]:
    """Drop classes with fewer than min_count samples; class dirs are deleted.

    A class survives exactly when its size is >= min_count. Returns the
    filtered dataset and {dropped label: sample count}.
    """
    if min_count < 0:
        raise ValueError(f"min_count must be >= 0, got {min_count}")
    kept = {}
    removed = {}
    for label, samples in ds.classes.items():
        if len(samples) >= min_count:
            kept[label] = samples
        else:
            removed[label] = len(samples)
            class_dir = Path(ds.root) / _label_dir(label)
            if class_dir.is_dir():
                shutil.rmtree(class_dir)
    out = LabeledDataset(root=ds.root, classes=kept)
    out.save_manifest(_load_manifest_extra(ds.root))
    return out, removed


def _load_manifest_extra(root: Path) -> dict:
    """Carry non-class fields of an existing manifest through rewrites."""
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        return {}
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return {k: v for k, v in payload.items() if k not in ("classes", "schema_version")}


def normalized_edit_distance(a: str, b: str) -> float:
    """Edit distance divided by the longer length; 0.0 for two empty strings."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return _kernels.levenshtein(a, b) / longest


def match_label(name: str, roster_names: list[str], fuzzy_max_dist: float = 0.3) -> str | None:
    """Best roster match for a harvested name, or None.

    Order: exact, substring (either direction), then nearest normalized edit
    distance within fuzzy_max_dist. Raises AmbiguousMatch when several
    roster names match equally (two substring hits, or a fuzzy tie).
    """
    name = normalize_name(name)
    if name in roster_names:
        return name
    subs = [rn for rn in roster_names if name in rn or rn in name]
    if len(subs) == 1:
        return subs[0]
    if len(subs) > 1:
        raise AmbiguousMatch(name, subs)
    dists = [(normalized_edit_distance(name, rn), rn) for rn in roster_names]
    best = min(d for d, _ in dists)
    if best > fuzzy_max_dist:
        return None
    candidates = [rn for d, rn in dists if d == best]
    if len(candidates) > 1:
        raise AmbiguousMatch(name, candidates)
    return candidates[0]


@dataclass
class MergeReport:
    merged: dict[str, str] = field(default_factory=dict)  # raw label -> roster name
    merges_substring: int = 0
    merges_fuzzy: int = 0
    ambiguous: list[AmbiguousMatch] = field(default_factory=list)
    dropped: dict[str, int] = field(default_factory=dict)  # raw label -> lost samples
    dropped_samples: int = 0


def reconcile_with_roster(
    ds: LabeledDataset, roster: Roster, fuzzy_max_dist: float = 0.3
) -> tuple[LabeledDataset, MergeReport]:
    """Rename/merge raw classes onto roster names; unmatched classes are dropped.

    Ambiguous matches are reported and dropped rather than guessed. Files of
    merged classes move into the target class directory; dropped class
    directories are deleted. No sample survives under a non-roster label.
    """
    roster_names = roster.names
    report = MergeReport()
    out_classes: dict[str, list[FaceSample]] = {}
    root = Path(ds.root)

    for label in sorted(ds.classes):
        samples = ds.classes[label]
        try:
            target = match_label(label, roster_names, fuzzy_max_dist)
        except AmbiguousMatch as exc:
            report.ambiguous.append(exc)
            target = None
        if target is None:
            report.dropped[label] = len(samples)
            report.dropped_samples += len(samples)
            class_dir = root / _label_dir(label)
            if class_dir.is_dir():
                shutil.rmtree(class_dir)
            continue
        if target != label:
            report.merged[label] = target
            is_substring = label in target or target in label
            if is_substring:
                report.merges_substring += 1
            else:
                report.merges_fuzzy += 1
            src_dir = root / _label_dir(label)
            dst_dir = root / _label_dir(target)
            dst_dir.mkdir(parents=True, exist_ok=True)
            moved = []
            for s in samples:
                src = root / s.image_ref
                rel = f"{_label_dir(target)}/{Path(s.image_ref).name}"
                if src.is_file():
                    src.replace(root / rel)
                moved.append(replace(s, label=target, image_ref=rel))
            samples = moved
            if src_dir.is_dir() and not any(src_dir.iterdir()):
                src_dir.rmdir()
        out_classes.setdefault(target, []).extend(samples)

    for label in out_classes:
        out_classes[label].sort(key=_sample_key)
    out = LabeledDataset(root=root, classes=out_classes)
    out.save_manifest(_load_manifest_extra(root))
    return out, report


def validate_dataset(
    ds: LabeledDataset, roster: Roster, min_class_frac: float = 0.8, min_count: int = 100
) -> None:
    """Check the reconciled dataset is trainable; raise TooShortVideo if not.

    Requires at least min_class_frac of the roster to have a class and every
    class to hold at least min_count samples. The error message tells the
    caller to discard the harvest and record a longer video.
    """
    n_classes = len(ds.classes)
    needed = min_class_frac * len(roster)
    problems = []
    if n_classes + 1e-9 < needed:
        problems.append(
            f"only {n_classes}/{len(roster)} roster students have a face class "
            f"(need at least {needed:.1f})"
        )
    small = {label: len(s) for label, s in ds.classes.items() if len(s) < min_count}
    if small:
        problems.append(f"classes below {min_count} samples: {small}")
    if problems:
        raise TooShortVideo(
            "harvested dataset is too sparse to train from: "
            + "; ".join(problems)
            + ". Discard this dataset and record a longer video."
        )
