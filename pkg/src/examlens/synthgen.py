"""Synthetic gallery-session videos with exact ground truth.

A session script lists participants with join/leave times and absence spans
(camera off while still in the call). The generator renders a gallery grid
the way meeting clients do: occupants pack row-major from the top-left, a
join appends at the lower-right, a leave shifts everyone after it one slot
earlier. Each participant gets a deterministic face (a colour-tinted variant
of one base portrait) and a name strip drawn with the shared bundled font.

Everything is integer-second granular: frames within one second are
identical by construction, and the ground-truth JSON records per-second cell
occupancy plus the inner face box for every visible face.
"""

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import cv2
import numpy as np

from .errors import BackendError, CapacityExceeded, ConfigError
from .model import CellRef, GridLayout, PixelRect, Roster, StudentRecord, cell_rect
from .ocr import NameStripSpec
from . import fonts

# inner face box of the base portrait (skimage astronaut), pinned so ground
# truth does not depend on running a detector at generation time
_BASE_BOX = PixelRect(174, 64, 103, 103)
_PATCH_MARGIN_X = 26
_PATCH_MARGIN_TOP = 26
_PATCH_MARGIN_BOTTOM = 15

# RGB channel multipliers; 10 distinct identities, verified visually distinct
# and all detectable after tinting
_TINTS = (
    (1.00, 1.00, 1.00),
    (1.10, 0.90, 0.80),
    (0.80, 1.00, 1.10),
    (0.90, 1.10, 0.90),
    (1.10, 1.10, 0.80),
    (0.75, 0.90, 1.05),
    (1.05, 0.80, 1.00),
    (0.85, 1.05, 1.05),
    (1.00, 0.95, 0.75),
    (0.80, 0.80, 1.00),
)

_FRAME_BG = 18
_CELL_BG = 38
_CELL_BORDER = 60
_FACE_HEIGHT_FRAC = 0.78
_FACE_LIFT_FRAC = 0.042

GT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Participant:
    student_id: str
    name: str
    join_s: int = 0
    leave_s: int | None = None
    absences: tuple[tuple[int, int], ...] = ()
    # fixes which face variant this participant gets; defaults to the
    # participant's position in the script, so set it when the same person
    # must look identical across different scripts
    tint_index: int | None = None


@dataclass(frozen=True)
class SessionScript:
    participants: tuple[Participant, ...]
    duration_s: int
    fps: float = 30.0
    width: int = 1280
    height: int = 720
    rows: int = 5
    cols: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.duration_s < 1:
            raise ConfigError(f"duration_s must be >= 1, got {self.duration_s}")
        if self.fps <= 0:
            raise ConfigError(f"fps must be positive, got {self.fps}")
        GridLayout(self.rows, self.cols, self.width, self.height)  # validates grid/frame
        ids = [p.student_id for p in self.participants]
        names = [p.name for p in self.participants]
        if len(set(ids)) != len(ids) or len(set(names)) != len(names):
            raise ConfigError("participant ids and names must be unique")
        for p in self.participants:
            leave = self.duration_s if p.leave_s is None else p.leave_s
            if not (0 <= p.join_s < leave <= self.duration_s):
                raise ConfigError(
                    f"{p.student_id}: need 0 <= join_s < leave_s <= duration, "
                    f"got join={p.join_s} leave={p.leave_s}"
                )
            spans = sorted(p.absences)
            for i, (a, b) in enumerate(spans):
                if not (p.join_s <= a < b <= leave):
                    raise ConfigError(f"{p.student_id}: absence [{a}, {b}) outside [join, leave)")
                if i > 0 and a < spans[i - 1][1]:
                    raise ConfigError(f"{p.student_id}: overlapping absence spans")

    @property
    def capacity(self) -> int:
        return self.rows * self.cols

    @property
    def frame_count(self) -> int:
        return int(round(self.duration_s * self.fps))

    def layout(self) -> GridLayout:
        return GridLayout(self.rows, self.cols, self.width, self.height)


def script_to_dict(script: SessionScript) -> dict:
    return {
        "duration_s": script.duration_s,
        "fps": script.fps,
        "width": script.width,
        "height": script.height,
        "rows": script.rows,
        "cols": script.cols,
        "seed": script.seed,
        "participants": [
            {
                "student_id": p.student_id,
                "name": p.name,
                "join_s": p.join_s,
                "leave_s": p.leave_s,
                "absences": [list(span) for span in p.absences],
                "tint_index": p.tint_index,
            }
            for p in script.participants
        ],
    }


def script_from_dict(data: dict) -> SessionScript:
    try:
        participants = tuple(
            Participant(
                student_id=p["student_id"],
                name=p["name"],
                join_s=int(p.get("join_s", 0)),
                leave_s=None if p.get("leave_s") is None else int(p["leave_s"]),
                absences=tuple((int(a), int(b)) for a, b in p.get("absences", [])),
                tint_index=None if p.get("tint_index") is None else int(p["tint_index"]),
            )
            for p in data["participants"]
        )
        return SessionScript(
            participants=participants,
            duration_s=int(data["duration_s"]),
            fps=float(data.get("fps", 30.0)),
            width=int(data.get("width", 1280)),
            height=int(data.get("height", 720)),
            rows=int(data.get("rows", 5)),
            cols=int(data.get("cols", 5)),
            seed=int(data.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed session script: {exc}") from exc


def load_script(path: str | Path) -> SessionScript:
    with open(path, encoding="utf-8") as fh:
        return script_from_dict(json.load(fh))


def save_script(script: SessionScript, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(script_to_dict(script), fh, indent=2)
        fh.write("\n")


def roster_from_script(script: SessionScript) -> Roster:
    return Roster(tuple(StudentRecord(p.student_id, p.name) for p in script.participants))


def reflow_layout(order: list[str], action: str, participant: str, capacity: int) -> list[str]:
    """Apply one join/leave event to the packed occupant order.

    Join appends at the end (the lower-right cell); leave removes the
    participant and shifts everyone after them one slot earlier. The input
    list is not mutated.
    """
    if action == "join":
        if participant in order:
            raise ValueError(f"{participant!r} is already in the gallery")
        if len(order) >= capacity:
            raise CapacityExceeded(f"gallery full ({capacity} cells), cannot seat {participant!r}")
        return list(order) + [participant]
    if action == "leave":
        if participant not in order:
            raise ValueError(f"{participant!r} is not in the gallery")
        out = list(order)
        out.remove(participant)
        return out
    raise ValueError(f"unknown reflow action {action!r}")


@dataclass(frozen=True)
class CellTruth:
    """One occupied cell at one second."""

    index: int
    student_id: str
    name: str
    face_visible: bool
    face_box: PixelRect | None  # cell-relative, None when the face is hidden


def occupancy_timeline(script: SessionScript) -> list[list[CellTruth]]:
    """Per-second occupancy, cells in packed order (linear index = position).

    Raises CapacityExceeded when a join would overflow the grid.
    """
    by_id = {p.student_id: p for p in script.participants}
    order: list[str] = []
    timeline: list[list[CellTruth]] = []
    for t in range(script.duration_s):
        for p in script.participants:
            leave = script.duration_s if p.leave_s is None else p.leave_s
            if leave == t and p.student_id in order:
                order = reflow_layout(order, "leave", p.student_id, script.capacity)
        for p in script.participants:
            if p.join_s == t:
                try:
                    order = reflow_layout(order, "join", p.student_id, script.capacity)
                except CapacityExceeded as exc:
                    raise CapacityExceeded(f"at second {t}: {exc}") from exc
        cells = []
        for idx, sid in enumerate(order):
            p = by_id[sid]
            visible = not any(a <= t < b for a, b in p.absences)
            cells.append(
                CellTruth(
                    index=idx,
                    student_id=sid,
                    name=p.name,
                    face_visible=visible,
                    face_box=None,  # filled in by the renderer, which knows cell sizes
                )
            )
        timeline.append(cells)
    return timeline


def identity_tint(identity_index: int) -> tuple[float, float, float]:
    base = _TINTS[identity_index % len(_TINTS)]
    # beyond ten identities, darken each successive cycle so faces stay distinct
    fade = 0.92 ** (identity_index // len(_TINTS))
    return (base[0] * fade, base[1] * fade, base[2] * fade)


@lru_cache(maxsize=64)
def face_patch(identity_index: int) -> tuple[np.ndarray, PixelRect]:
    """Tinted portrait patch (BGR, read-only) and the inner face box within it."""
    import skimage.data

    base = skimage.data.astronaut()  # RGB
    y0 = _BASE_BOX.y - _PATCH_MARGIN_TOP
    y1 = _BASE_BOX.y2 + _PATCH_MARGIN_BOTTOM
    x0 = _BASE_BOX.x - _PATCH_MARGIN_X
    x1 = _BASE_BOX.x2 + _PATCH_MARGIN_X
    patch = base[y0:y1, x0:x1].astype(np.float64)
    tint = identity_tint(identity_index)
    for ch in range(3):
        patch[:, :, ch] *= tint[ch]
    patch = np.clip(patch, 0, 255).astype(np.uint8)
    inner = PixelRect(_PATCH_MARGIN_X, _PATCH_MARGIN_TOP, _BASE_BOX.w, _BASE_BOX.h)
    bgr = cv2.cvtColor(patch, cv2.COLOR_RGB2BGR)
    bgr.flags.writeable = False
    return bgr, inner


def _brightness(seed: int, second: int, identity_index: int) -> float:
    rng = np.random.RandomState((seed * 100003 + second * 101 + identity_index * 7) % (2**31 - 1))
    return 1.0 + rng.uniform(-0.03, 0.03)


def render_cell(
    w: int,
    h: int,
    name: str,
    identity_index: int | None,
    face_visible: bool,
    seed: int = 0,
    second: int = 0,
) -> tuple[np.ndarray, PixelRect | None]:
    """Render one cell; returns (BGR image, cell-relative inner face box or None).

    identity_index=None renders an empty pane (no face, no strip), useful as
    the blank reference when probing rendered frames.
    """
    cell = np.full((h, w, 3), _CELL_BG, dtype=np.uint8)
    cell[0, :] = _CELL_BORDER
    cell[-1, :] = _CELL_BORDER
    cell[:, 0] = _CELL_BORDER
    cell[:, -1] = _CELL_BORDER
    if identity_index is None:
        return cell, None

    inner_box = None
    if face_visible:
        patch, inner = face_patch(identity_index)
        ph = max(8, round(_FACE_HEIGHT_FRAC * h))
        scale = ph / patch.shape[0]
        pw = max(8, round(patch.shape[1] * scale))
        if pw > w - 2:  # unusually wide cells only; keep the patch inside
            pw = w - 2
            scale = pw / patch.shape[1]
            ph = max(8, round(patch.shape[0] * scale))
        resized = cv2.resize(patch, (pw, ph), interpolation=cv2.INTER_AREA)
        gain = _brightness(seed, second, identity_index)
        resized = np.clip(resized.astype(np.float64) * gain, 0, 255).astype(np.uint8)
        ox = (w - pw) // 2
        oy = max(0, (h - ph) // 2 - round(_FACE_LIFT_FRAC * h))
        cell[oy : oy + ph, ox : ox + pw] = resized[: h - oy, : w - ox]
        inner_box = PixelRect(
            ox + round(inner.x * scale),
            oy + round(inner.y * scale),
            max(1, round(inner.w * scale)),
            max(1, round(inner.h * scale)),
        )

    spec = NameStripSpec()
    strip_w = int(spec.w_frac * w + 1e-6)
    strip_h = int((spec.y_frac + spec.h_frac) * h + 1e-6) - int(spec.y_frac * h + 1e-6)
    strip = fonts.render_name_strip(name, max(1, strip_w), max(1, strip_h))
    sy = int(spec.y_frac * h + 1e-6)
    sx = int(spec.x_frac * w + 1e-6)
    region = cell[sy : sy + strip.shape[0], sx : sx + strip.shape[1]]
    # text overwrites the pane; background stays dark so binarize keeps only glyphs
    np.maximum(region, strip[: region.shape[0], : region.shape[1], None], out=region)
    return cell, inner_box


def render_frame(
    script: SessionScript, cells: list[CellTruth], second: int
) -> tuple[np.ndarray, list[CellTruth]]:
    """Render one second's frame; returns (image, cells with face boxes filled)."""
    layout = script.layout()
    frame = np.full((script.height, script.width, 3), _FRAME_BG, dtype=np.uint8)
    identity_of = {
        p.student_id: (p.tint_index if p.tint_index is not None else i)
        for i, p in enumerate(script.participants)
    }
    enriched = []
    for ct in cells:
        rect = cell_rect(layout, CellRef(ct.index // layout.cols, ct.index % layout.cols))
        img, inner = render_cell(
            rect.w,
            rect.h,
            ct.name,
            identity_of[ct.student_id],
            ct.face_visible,
            seed=script.seed,
            second=second,
        )
        frame[rect.y : rect.y2, rect.x : rect.x2] = img
        enriched.append(
            CellTruth(ct.index, ct.student_id, ct.name, ct.face_visible, inner)
        )
    return frame, enriched


def generate_video(
    script: SessionScript, video_path: str | Path, gt_path: str | Path
) -> tuple[Path, Path]:
    """Write the session video (mp4) and its ground-truth JSON.

    Frame count is round(duration_s * fps); every frame within a second is
    identical. Ground truth records, per second, each occupied cell with its
    student, face visibility, and cell-relative inner face box.
    """
    video_path = Path(video_path)
    gt_path = Path(gt_path)
    timeline = occupancy_timeline(script)
    writer = cv2.VideoWriter(
        str(video_path), cv2.VideoWriter_fourcc(*"mp4v"), script.fps, (script.width, script.height)
    )
    if not writer.isOpened():
        raise BackendError(f"could not open video writer for {video_path}")
    seconds_out = []
    try:
        for t in range(script.duration_s):
            frame, cells = render_frame(script, timeline[t], t)
            seconds_out.append(
                {
                    "cells": [
                        {
                            "index": c.index,
                            "student_id": c.student_id,
                            "name": c.name,
                            "face": c.face_visible,
                            "face_box": None
                            if c.face_box is None
                            else [c.face_box.x, c.face_box.y, c.face_box.w, c.face_box.h],
                        }
                        for c in cells
                    ]
                }
            )
            # frames for this second; the final second may be partial
            start = int(round(t * script.fps))
            end = int(round((t + 1) * script.fps))
            end = min(end, script.frame_count)
            for _ in range(start, end):
                writer.write(frame)
    finally:
        writer.release()

    gt = {
        "schema_version": GT_SCHEMA_VERSION,
        "duration_s": script.duration_s,
        "fps": script.fps,
        "frame_count": script.frame_count,
        "width": script.width,
        "height": script.height,
        "rows": script.rows,
        "cols": script.cols,
        "seed": script.seed,
        "participants": [
            {"student_id": p.student_id, "name": p.name} for p in script.participants
        ],
        "seconds": seconds_out,
    }
    with open(gt_path, "w", encoding="utf-8") as fh:
        json.dump(gt, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return video_path, gt_path


@dataclass
class GroundTruth:
    """Loaded ground-truth JSON with per-second accessors."""

    data: dict

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruth":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    @property
    def duration_s(self) -> int:
        return int(self.data["duration_s"])

    @property
    def fps(self) -> float:
        return float(self.data["fps"])

    def layout(self) -> GridLayout:
        return GridLayout(
            int(self.data["rows"]),
            int(self.data["cols"]),
            int(self.data["width"]),
            int(self.data["height"]),
        )

    def cells_at_second(self, t: int) -> dict[int, CellTruth]:
        if not (0 <= t < self.duration_s):
            raise ValueError(f"second {t} outside 0..{self.duration_s - 1}")
        out = {}
        for c in self.data["seconds"][t]["cells"]:
            box = c.get("face_box")
            out[int(c["index"])] = CellTruth(
                index=int(c["index"]),
                student_id=c["student_id"],
                name=c["name"],
                face_visible=bool(c["face"]),
                face_box=None if box is None else PixelRect(*box),
            )
        return out

    def cells_at_frame(self, frame_index: int) -> dict[int, CellTruth]:
        return self.cells_at_second(int(frame_index / self.fps))

    def face_visible_seconds(self, student_id: str) -> set[int]:
        """Seconds where the student's face is rendered."""
        out = set()
        for t in range(self.duration_s):
            for c in self.data["seconds"][t]["cells"]:
                if c["student_id"] == student_id and c["face"]:
                    out.add(t)
        return out

    def onscreen_seconds(self, student_id: str) -> set[int]:
        """Seconds where the student occupies a cell, face visible or not."""
        out = set()
        for t in range(self.duration_s):
            for c in self.data["seconds"][t]["cells"]:
                if c["student_id"] == student_id:
                    out.add(t)
        return out
