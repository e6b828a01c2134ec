"""Core value types: roster records, grid geometry, analysis configuration.

A recording of a gallery-view video call is treated as a fixed rows x cols
grid of participant cells. All coordinates are integer pixels, x right and
y down, and cells are indexed row-major.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, RosterError


@dataclass(frozen=True)
class StudentRecord:
    student_id: str
    display_name: str


@dataclass(frozen=True)
class Roster:
    """Ordered collection of students; names and ids are unique."""

    records: tuple[StudentRecord, ...]

    def __post_init__(self):
        ids = [r.student_id for r in self.records]
        names = [normalize_name(r.display_name) for r in self.records]
        if len(set(ids)) != len(ids):
            raise RosterError("duplicate student_id in roster")
        if len(set(names)) != len(names):
            raise RosterError("duplicate display name in roster (after normalization)")
        if any(not n for n in names):
            raise RosterError("empty display name in roster")

    @property
    def names(self) -> list[str]:
        """Normalized display names, roster order preserved."""
        return [normalize_name(r.display_name) for r in self.records]

    def __len__(self) -> int:
        return len(self.records)


def normalize_name(s: str) -> str:
    """Collapse whitespace and uppercase; the canonical matching form."""
    return " ".join(s.split()).upper()


def load_roster(path: str | Path) -> Roster:
    """Read a roster CSV with header ``student_id,name``."""
    path = Path(path)
    if not path.is_file():
        raise RosterError(f"roster file not found: {path}")
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "student_id" not in reader.fieldnames or "name" not in reader.fieldnames:
            raise RosterError(f"roster CSV needs 'student_id' and 'name' columns, got {reader.fieldnames}")
        for row in reader:
            sid = (row["student_id"] or "").strip()
            name = (row["name"] or "").strip()
            if not sid:
                raise RosterError("roster row with empty student_id")
            records.append(StudentRecord(sid, name))
    if not records:
        raise RosterError(f"roster is empty: {path}")
    return Roster(tuple(records))


def save_roster(roster: Roster, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["student_id", "name"])
        for r in roster.records:
            writer.writerow([r.student_id, r.display_name])


@dataclass(frozen=True)
class CellRef:
    """Grid cell by zero-based row/col."""

    row: int
    col: int


@dataclass(frozen=True)
class PixelRect:
    """Axis-aligned rectangle: top-left corner plus size, in pixels."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative rect size: {self}")

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def area(self) -> int:
        return self.w * self.h


@dataclass(frozen=True)
class GridLayout:
    rows: int
    cols: int
    frame_w: int
    frame_h: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"grid needs at least 1x1, got {self.rows}x{self.cols}")
        if self.frame_w < self.cols or self.frame_h < self.rows:
            raise ConfigError(
                f"frame {self.frame_w}x{self.frame_h} too small for {self.rows}x{self.cols} grid"
            )

    @property
    def cell_count(self) -> int:
        return self.rows * self.cols


def cell_rect(layout: GridLayout, cell: CellRef) -> PixelRect:
    """Pixel rectangle of one grid cell.

    Cell sizes are floor(frame / n); the last row and column absorb the
    remainder pixels so the cells tile the frame exactly.
    """
    if not (0 <= cell.row < layout.rows and 0 <= cell.col < layout.cols):
        raise ValueError(f"cell {cell} outside {layout.rows}x{layout.cols} grid")
    cw = layout.frame_w // layout.cols
    ch = layout.frame_h // layout.rows
    x = cell.col * cw
    y = cell.row * ch
    w = layout.frame_w - x if cell.col == layout.cols - 1 else cw
    h = layout.frame_h - y if cell.row == layout.rows - 1 else ch
    return PixelRect(x, y, w, h)


def partition_frame(layout: GridLayout) -> dict[CellRef, PixelRect]:
    """All cell rectangles, keyed by CellRef; tiles the frame with no gaps."""
    return {
        CellRef(r, c): cell_rect(layout, CellRef(r, c))
        for r in range(layout.rows)
        for c in range(layout.cols)
    }


def cell_linear_index(cell: CellRef, layout: GridLayout) -> int:
    """Row-major linear index of a cell."""
    if not (0 <= cell.row < layout.rows and 0 <= cell.col < layout.cols):
        raise ValueError(f"cell {cell} outside {layout.rows}x{layout.cols} grid")
    return cell.row * layout.cols + cell.col


def cell_from_index(index: int, layout: GridLayout) -> CellRef:
    if not (0 <= index < layout.cell_count):
        raise ValueError(f"linear index {index} outside 0..{layout.cell_count - 1}")
    return CellRef(index // layout.cols, index % layout.cols)


def second_of_frame(frame_index: int, fps: float) -> int:
    """Integer second a frame falls in (floor of timestamp)."""
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    if frame_index < 0:
        raise ValueError(f"negative frame index {frame_index}")
    return int(math.floor(frame_index / fps))


@dataclass(frozen=True)
class AnalysisConfig:
    """Presence analysis knobs.

    A student is present in a window iff the number of distinct seconds with
    an accepted recognition is strictly greater than presence_min_count.
    """

    fps_assumed: float = 30.0
    window_s: int = 30
    presence_min_count: int = 10
    accept_threshold: float = 0.5
    rows: int = 5
    cols: int = 5

    def __post_init__(self):
        if self.fps_assumed <= 0:
            raise ConfigError(f"fps_assumed must be positive, got {self.fps_assumed}")
        if self.window_s < 1:
            raise ConfigError(f"window_s must be >= 1, got {self.window_s}")
        if not (0 <= self.presence_min_count < self.window_s):
            raise ConfigError(
                f"presence_min_count must be in [0, window_s), got {self.presence_min_count}"
            )
        if not (0.0 <= self.accept_threshold <= 1.0):
            raise ConfigError(f"accept_threshold must be in [0, 1], got {self.accept_threshold}")
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
