"""Report rendering: summary JSON, event timeline CSV, and charts.

Every figure in summary.json is recomputed from the event list with the
pure functions in examlens.analyze, so the summary can always be rebuilt
from timeline.csv alone. Charts: accepted recognitions per student, windows
present per student, and a per-student absence timeline.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .analyze import (
    AbsenceInterval,
    PresenceWindow,
    RecognitionEvent,
    StudentSummary,
    absence_intervals,
    consecutive_summary,
    events_to_csv,
    window_count,
    window_presence,
)
from .model import AnalysisConfig

SUMMARY_SCHEMA_VERSION = 1


@dataclass
class ReportBundle:
    out_dir: Path
    summary_path: Path
    timeline_path: Path
    chart_paths: dict[str, Path]
    windows: list[PresenceWindow]
    intervals: list[AbsenceInterval]
    summaries: list[StudentSummary]


def build_summary(
    events: list[RecognitionEvent],
    roster_names: list[str],
    cfg: AnalysisConfig,
    total_seconds: int,
) -> dict:
    """Pure summary computation; deterministic for given inputs."""
    windows = window_presence(events, roster_names, cfg, total_seconds)
    intervals = absence_intervals(windows, cfg, total_seconds)
    summaries = consecutive_summary(windows, cfg)
    by_student_intervals: dict[str, list[list[int]]] = {name: [] for name in roster_names}
    for iv in intervals:
        by_student_intervals[iv.student].append([iv.start_s, iv.end_s])
    faces = sum(1 for e in events if e.face_found)
    accepted = sum(1 for e in events if e.accepted)
    return {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "duration_s": total_seconds,
        "window_s": cfg.window_s,
        "presence_min_count": cfg.presence_min_count,
        "accept_threshold": cfg.accept_threshold,
        "window_count": window_count(total_seconds, cfg.window_s),
        "final_window_partial": total_seconds % cfg.window_s != 0,
        "totals": {
            "events": len(events),
            "faces_found": faces,
            "accepted": accepted,
            "rejected_faces": faces - accepted,
        },
        "students": [
            {
                "student": s.student,
                "total_recognitions": s.total_recognitions,
                "windows_present": s.windows_present,
                "windows_absent": s.windows_absent,
                "longest_consecutive_absence_s": s.longest_consecutive_absence_s,
                "absence_intervals": by_student_intervals[s.student],
            }
            for s in summaries
        ],
    }


def _style_student_axis(ax, names):
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)


def _chart_recognition_frequency(summaries, path: Path) -> None:
    names = [s.student for s in summaries]
    values = [s.total_recognitions for s in summaries]
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(names)), 4))
    ax.bar(range(len(names)), values, color="#3b7dd8")
    _style_student_axis(ax, names)
    ax.set_ylabel("accepted recognitions (s)")
    ax.set_title("Recognition frequency per student")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _chart_present_frequency(summaries, n_windows: int, path: Path) -> None:
    names = [s.student for s in summaries]
    values = [s.windows_present for s in summaries]
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(names)), 4))
    ax.bar(range(len(names)), values, color="#2f9e44")
    ax.axhline(n_windows, color="#888", linewidth=0.8, linestyle="--", label="windows total")
    _style_student_axis(ax, names)
    ax.set_ylabel("windows present")
    ax.set_title("Present frequency per student")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _chart_absence_timeline(
    summaries, intervals: list[AbsenceInterval], total_seconds: int, path: Path
) -> None:
    names = [s.student for s in summaries]
    row_of = {name: i for i, name in enumerate(names)}
    fig, ax = plt.subplots(figsize=(8, max(3, 0.4 * len(names) + 1)))
    for iv in intervals:
        ax.broken_barh([(iv.start_s, iv.duration_s)], (row_of[iv.student] - 0.35, 0.7), color="#d84343")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlim(0, max(1, total_seconds))
    ax.set_ylim(-0.6, len(names) - 0.4)
    ax.invert_yaxis()
    ax.set_xlabel("time (s)")
    ax.set_title("Consecutive disappearance per student")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_report(
    events: list[RecognitionEvent],
    roster_names: list[str],
    cfg: AnalysisConfig,
    total_seconds: int,
    out_dir: str | Path,
) -> ReportBundle:
    """Write summary.json, timeline.csv, and the three charts into out_dir.

    Rendering is idempotent: the JSON and CSV artifacts are byte-identical
    across repeat calls with the same inputs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    windows = window_presence(events, roster_names, cfg, total_seconds)
    intervals = absence_intervals(windows, cfg, total_seconds)
    summaries = consecutive_summary(windows, cfg)
    summary = build_summary(events, roster_names, cfg, total_seconds)

    summary_path = out_dir / "summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    timeline_path = events_to_csv(events, out_dir / "timeline.csv")

    charts = {
        "recognition_frequency": out_dir / "recognition_frequency.png",
        "present_frequency": out_dir / "present_frequency.png",
        "consecutive_disappear": out_dir / "consecutive_disappear.png",
    }
    _chart_recognition_frequency(summaries, charts["recognition_frequency"])
    _chart_present_frequency(summaries, summary["window_count"], charts["present_frequency"])
    _chart_absence_timeline(summaries, intervals, total_seconds, charts["consecutive_disappear"])

    return ReportBundle(
        out_dir=out_dir,
        summary_path=summary_path,
        timeline_path=timeline_path,
        chart_paths=charts,
        windows=windows,
        intervals=intervals,
        summaries=summaries,
    )
