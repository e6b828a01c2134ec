"""Presence analysis: per-second recognition events to windows and absences.

The analyzer samples one frame per second (the recognizer is called once per
(second, cell), never per frame), classifies each detected face, and keeps
the prediction only when it clears the acceptance threshold. Downstream
math is pure:

- a presence window covers window_s seconds; a student is present in it iff
  their count of DISTINCT recognized seconds strictly exceeds
  presence_min_count;
- absence intervals are maximal runs of absent windows, so their boundaries
  are multiples of window_s with the final one clipped to the video end;
- the consecutive-absence figure is the longest absent-window run times
  window_s.
"""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .detect import DetectorSpec, best_detection, crop_face, detect_faces
from .model import AnalysisConfig, CellRef, GridLayout, Roster, partition_frame
from .recognize import Classifier, accept_prediction
from .video import VideoMeta, iter_sampled, probe_video

EVENT_CSV_COLUMNS = ("second", "row", "col", "face_found", "class", "prob", "accepted")


@dataclass(frozen=True)
class RecognitionEvent:
    """Outcome of one (second, cell) classification.

    class_name is the argmax class whenever a face was found, regardless of
    acceptance, so reports can tell "no face" from "face nobody recognized".
    """

    second: int
    cell: CellRef
    face_found: bool
    class_name: str | None
    prob: float
    accepted: bool

    def __post_init__(self):
        if self.accepted and (not self.face_found or self.class_name is None):
            raise ValueError("accepted event requires a face and a class")


@dataclass(frozen=True)
class PresenceWindow:
    student: str
    window_index: int
    count: int
    present: bool


@dataclass(frozen=True)
class AbsenceInterval:
    student: str
    start_s: int
    end_s: int

    @property
    def duration_s(self) -> int:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class StudentSummary:
    student: str
    total_recognitions: int
    windows_present: int
    windows_absent: int
    longest_consecutive_absence_s: int


def analyze_video(
    video_path: str | Path,
    classifier: Classifier,
    cfg: AnalysisConfig = AnalysisConfig(),
    detector: DetectorSpec = DetectorSpec(),
    crop_margin_frac: float = 0.25,
    per_frame: bool = False,
    progress: Callable[[int, int], None] | None = None,
) -> tuple[list[RecognitionEvent], VideoMeta]:
    """Run detection + recognition over the recording.

    Produces at most one event per (second, cell), ordered by second then
    row-major cell. The default samples one frame per second, so the
    recognizer runs once per (second, cell) rather than once per frame.
    per_frame=True is the naive baseline: every frame is decoded, detected,
    and predicted, and only the first frame of each second is recorded; it
    exists so the per-second saving can be measured directly.
    """
    meta = probe_video(video_path)
    fps = meta.fps if meta.fps > 0 else cfg.fps_assumed
    layout = GridLayout(cfg.rows, cfg.cols, meta.width, meta.height)
    rects = partition_frame(layout)
    ordered_cells = sorted(rects, key=lambda c: (c.row, c.col))
    every_n = 1 if per_frame else max(1, round(fps))

    events: list[RecognitionEvent] = []
    seen: set[tuple[int, int, int]] = set()
    total_seconds = max(1, int(np.ceil(meta.frame_count / fps)))

    for frame in iter_sampled(video_path, every_n):
        second = int(frame.index / fps)
        if progress is not None:
            progress(second, total_seconds)
        for cell in ordered_cells:
            key = (second, cell.row, cell.col)
            record = key not in seen
            if not record and not per_frame:
                continue
            seen.add(key)
            rect = rects[cell]
            cell_img = frame.image[rect.y : rect.y2, rect.x : rect.x2]
            det = best_detection(detect_faces(cell_img, detector))
            if det is None:
                if record:
                    events.append(
                        RecognitionEvent(
                            second, cell, face_found=False, class_name=None, prob=0.0, accepted=False
                        )
                    )
                continue
            face = crop_face(cell_img, det, crop_margin_frac)
            pred = classifier.predict(face)
            if record:
                accepted = pred.argmax_prob > cfg.accept_threshold
                events.append(
                    RecognitionEvent(
                        second,
                        cell,
                        face_found=True,
                        class_name=pred.argmax_class,
                        prob=pred.argmax_prob,
                        accepted=accepted,
                    )
                )
    events.sort(key=lambda e: (e.second, e.cell.row, e.cell.col))
    return events, meta


def window_count(total_seconds: int, window_s: int) -> int:
    """Number of windows covering total_seconds (last one may be partial)."""
    if total_seconds < 0:
        raise ValueError(f"total_seconds must be >= 0, got {total_seconds}")
    return -(-total_seconds // window_s)


def window_presence(
    events: list[RecognitionEvent],
    roster_names: list[str],
    cfg: AnalysisConfig,
    total_seconds: int,
) -> list[PresenceWindow]:
    """Presence decision per (student, window).

    The count is the number of distinct seconds in the window holding at
    least one accepted recognition of the student; two cells recognizing the
    same student within one second count once. Every roster student gets a
    row for every window, events or not.
    """
    n_windows = window_count(total_seconds, cfg.window_s)
    recognized: dict[str, set[int]] = {name: set() for name in roster_names}
    for e in events:
        if e.accepted and e.class_name in recognized:
            recognized[e.class_name].add(e.second)
    out = []
    for name in roster_names:
        seconds = recognized[name]
        counts = [0] * n_windows
        for s in seconds:
            w = s // cfg.window_s
            if 0 <= w < n_windows:
                counts[w] += 1
        for w in range(n_windows):
            out.append(
                PresenceWindow(
                    student=name,
                    window_index=w,
                    count=counts[w],
                    present=counts[w] > cfg.presence_min_count,
                )
            )
    return out


def absence_intervals(
    windows: list[PresenceWindow], cfg: AnalysisConfig, total_seconds: int
) -> list[AbsenceInterval]:
    """Maximal absent-window runs as [start_s, end_s) intervals.

    Boundaries are multiples of window_s except the final interval, which is
    clipped to total_seconds when the last window is partial.
    """
    by_student: dict[str, list[PresenceWindow]] = {}
    for w in windows:
        by_student.setdefault(w.student, []).append(w)
    out = []
    for student in sorted(by_student):
        rows = sorted(by_student[student], key=lambda w: w.window_index)
        run_start = None
        for w in rows:
            if not w.present and run_start is None:
                run_start = w.window_index
            elif w.present and run_start is not None:
                out.append(
                    AbsenceInterval(student, run_start * cfg.window_s, w.window_index * cfg.window_s)
                )
                run_start = None
        if run_start is not None:
            end = min(rows[-1].window_index * cfg.window_s + cfg.window_s, total_seconds)
            out.append(AbsenceInterval(student, run_start * cfg.window_s, end))
    return out


def consecutive_summary(
    windows: list[PresenceWindow], cfg: AnalysisConfig
) -> list[StudentSummary]:
    """Per-student roll-up, sorted by student name."""
    by_student: dict[str, list[PresenceWindow]] = {}
    for w in windows:
        by_student.setdefault(w.student, []).append(w)
    out = []
    for student in sorted(by_student):
        rows = sorted(by_student[student], key=lambda w: w.window_index)
        longest = 0
        run = 0
        for w in rows:
            run = run + 1 if not w.present else 0
            longest = max(longest, run)
        out.append(
            StudentSummary(
                student=student,
                total_recognitions=sum(w.count for w in rows),
                windows_present=sum(1 for w in rows if w.present),
                windows_absent=sum(1 for w in rows if not w.present),
                longest_consecutive_absence_s=longest * cfg.window_s,
            )
        )
    return out


def events_to_csv(events: list[RecognitionEvent], path: str | Path) -> Path:
    """Write the event log; one row per (second, cell), stable column order."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_CSV_COLUMNS)
        for e in sorted(events, key=lambda e: (e.second, e.cell.row, e.cell.col)):
            writer.writerow(
                [
                    e.second,
                    e.cell.row,
                    e.cell.col,
                    int(e.face_found),
                    e.class_name or "",
                    f"{e.prob:.6f}",
                    int(e.accepted),
                ]
            )
    return path


def events_from_csv(path: str | Path) -> list[RecognitionEvent]:
    events = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(EVENT_CSV_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"event CSV missing columns: {sorted(missing)}")
        for row in reader:
            events.append(
                RecognitionEvent(
                    second=int(row["second"]),
                    cell=CellRef(int(row["row"]), int(row["col"])),
                    face_found=bool(int(row["face_found"])),
                    class_name=row["class"] or None,
                    prob=float(row["prob"]),
                    accepted=bool(int(row["accepted"])),
                )
            )
    return events
