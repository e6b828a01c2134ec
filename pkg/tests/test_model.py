"""Roster handling and grid geometry."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from examlens.errors import ConfigError, RosterError
from examlens.model import (
    AnalysisConfig,
    CellRef,
    GridLayout,
    Roster,
    StudentRecord,
    cell_from_index,
    cell_linear_index,
    cell_rect,
    load_roster,
    normalize_name,
    partition_frame,
    save_roster,
    second_of_frame,
)


class TestRoster:
    def test_round_trip(self, tmp_path):
        roster = Roster(
            (
                StudentRecord("s01", "Ada Wong"),
                StudentRecord("s02", "Ben Hui"),
            )
        )
        path = tmp_path / "roster.csv"
        save_roster(roster, path)
        back = load_roster(path)
        assert back == roster
        assert back.names == ["ADA WONG", "BEN HUI"]

    def test_duplicate_id_rejected(self):
        with pytest.raises(RosterError, match="duplicate student_id"):
            Roster((StudentRecord("s01", "A B"), StudentRecord("s01", "C D")))

    def test_duplicate_name_after_normalization_rejected(self):
        with pytest.raises(RosterError, match="duplicate display name"):
            Roster((StudentRecord("s01", "Ada  Wong"), StudentRecord("s02", "ADA WONG")))

    def test_empty_name_rejected(self):
        with pytest.raises(RosterError, match="empty display name"):
            Roster((StudentRecord("s01", "   "),))

    def test_missing_file(self, tmp_path):
        with pytest.raises(RosterError, match="not found"):
            load_roster(tmp_path / "nope.csv")

    def test_missing_columns(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("id,who\n1,x\n")
        with pytest.raises(RosterError, match="columns"):
            load_roster(p)

    def test_empty_roster_file(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("student_id,name\n")
        with pytest.raises(RosterError, match="empty"):
            load_roster(p)


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("ada wong", "ADA WONG"),
        ("  Ada   Wong  ", "ADA WONG"),
        ("ADA\tWONG", "ADA WONG"),
        ("", ""),
    ],
)
def test_normalize_name(raw, expected):
    assert normalize_name(raw) == expected


class TestGrid:
    def test_even_partition_pin(self):
        layout = GridLayout(5, 5, 1280, 720)
        rects = partition_frame(layout)
        assert len(rects) == 25
        for rect in rects.values():
            assert (rect.w, rect.h) == (256, 144)

    def test_remainder_goes_to_last_row_and_col(self):
        layout = GridLayout(5, 5, 1281, 721)
        r = cell_rect(layout, CellRef(4, 4))
        assert (r.w, r.h) == (257, 145)
        r0 = cell_rect(layout, CellRef(0, 0))
        assert (r0.w, r0.h) == (256, 144)

    def test_out_of_range_cell(self):
        layout = GridLayout(2, 2, 100, 100)
        with pytest.raises(ValueError):
            cell_rect(layout, CellRef(2, 0))
        with pytest.raises(ValueError):
            cell_rect(layout, CellRef(0, -1))

    def test_invalid_layouts(self):
        with pytest.raises(ConfigError):
            GridLayout(0, 5, 100, 100)
        with pytest.raises(ConfigError):
            GridLayout(5, 5, 4, 100)

    @given(
        rows=st.integers(1, 8),
        cols=st.integers(1, 8),
        w=st.integers(8, 300),
        h=st.integers(8, 300),
    )
    def test_partition_covers_every_pixel_once(self, rows, cols, w, h):
        if w < cols or h < rows:
            return
        layout = GridLayout(rows, cols, w, h)
        coverage = np.zeros((h, w), dtype=np.int32)
        for rect in partition_frame(layout).values():
            coverage[rect.y : rect.y2, rect.x : rect.x2] += 1
        assert (coverage == 1).all()

    @given(rows=st.integers(1, 7), cols=st.integers(1, 7))
    def test_linear_index_bijection(self, rows, cols):
        layout = GridLayout(rows, cols, 700, 700)
        seen = set()
        for r in range(rows):
            for c in range(cols):
                idx = cell_linear_index(CellRef(r, c), layout)
                assert cell_from_index(idx, layout) == CellRef(r, c)
                seen.add(idx)
        assert seen == set(range(rows * cols))

    def test_index_bounds(self):
        layout = GridLayout(2, 3, 60, 60)
        with pytest.raises(ValueError):
            cell_from_index(6, layout)
        with pytest.raises(ValueError):
            cell_linear_index(CellRef(1, 3), layout)


class TestSecondOfFrame:
    def test_exact_fps(self):
        assert second_of_frame(0, 30.0) == 0
        assert second_of_frame(29, 30.0) == 0
        assert second_of_frame(30, 30.0) == 1
        assert second_of_frame(299, 30.0) == 9

    def test_ntsc_fps(self):
        assert second_of_frame(2997, 29.97) == 100

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            second_of_frame(-1, 30.0)
        with pytest.raises(ValueError):
            second_of_frame(0, 0.0)


class TestAnalysisConfig:
    def test_defaults_valid(self):
        cfg = AnalysisConfig()
        assert cfg.window_s == 30
        assert cfg.presence_min_count == 10

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"window_s": 0},
            {"presence_min_count": 30, "window_s": 30},
            {"presence_min_count": -1},
            {"accept_threshold": 1.5},
            {"fps_assumed": 0},
            {"rows": 0},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ConfigError):
            AnalysisConfig(**kwargs)
