"""Synthetic session generation: reflow rules, timelines, video + truth files."""

import numpy as np
import pytest

from examlens.errors import CapacityExceeded, ConfigError
from examlens.model import PixelRect
from examlens.ocr import read_name
from examlens.synthgen import (
    GroundTruth,
    Participant,
    SessionScript,
    generate_video,
    identity_tint,
    occupancy_timeline,
    reflow_layout,
    render_cell,
    render_frame,
    roster_from_script,
    script_from_dict,
    script_to_dict,
)
from examlens.video import iter_frames, probe_video


def two_by_two(parts, duration=6, fps=4.0):
    return SessionScript(
        participants=tuple(parts),
        duration_s=duration,
        fps=fps,
        width=512,
        height=288,
        rows=2,
        cols=2,
        seed=1,
    )


class TestReflow:
    def test_join_appends_lower_right(self):
        order = ["a", "b"]
        assert reflow_layout(order, "join", "c", 4) == ["a", "b", "c"]
        assert order == ["a", "b"]  # input untouched

    def test_leave_shifts_later_occupants(self):
        assert reflow_layout(["a", "b", "c"], "leave", "a", 4) == ["b", "c"]
        assert reflow_layout(["a", "b", "c"], "leave", "b", 4) == ["a", "c"]

    def test_join_duplicate(self):
        with pytest.raises(ValueError):
            reflow_layout(["a"], "join", "a", 4)

    def test_leave_absent(self):
        with pytest.raises(ValueError):
            reflow_layout(["a"], "leave", "b", 4)

    def test_capacity(self):
        with pytest.raises(CapacityExceeded):
            reflow_layout(["a", "b", "c", "d"], "join", "e", 4)

    def test_unknown_action(self):
        with pytest.raises(ValueError):
            reflow_layout([], "swap", "a", 4)

    def test_random_sequences_stay_packed(self):
        rng = np.random.RandomState(9)
        order: list[str] = []
        pool = [f"p{i}" for i in range(6)]
        for _ in range(200):
            joinable = [p for p in pool if p not in order]
            if order and (not joinable or rng.rand() < 0.5):
                order = reflow_layout(order, "leave", order[rng.randint(len(order))], 4)
            elif joinable and len(order) < 4:
                order = reflow_layout(order, "join", joinable[rng.randint(len(joinable))], 4)
            assert len(order) <= 4
            assert len(set(order)) == len(order)


class TestScript:
    def test_round_trip(self):
        script = two_by_two(
            [
                Participant("s1", "ADA WONG", tint_index=4),
                Participant("s2", "BEN HUI", join_s=2, leave_s=5, absences=((3, 4),)),
            ]
        )
        assert script_from_dict(script_to_dict(script)) == script

    def test_duplicate_names_rejected(self):
        with pytest.raises(ConfigError):
            two_by_two([Participant("s1", "ADA"), Participant("s2", "ADA")])

    def test_join_after_leave_rejected(self):
        with pytest.raises(ConfigError):
            two_by_two([Participant("s1", "ADA", join_s=5, leave_s=3)])

    def test_absence_outside_attendance_rejected(self):
        with pytest.raises(ConfigError):
            two_by_two([Participant("s1", "ADA", join_s=2, absences=((0, 3),))])

    def test_overlapping_absences_rejected(self):
        with pytest.raises(ConfigError):
            two_by_two([Participant("s1", "ADA", absences=((1, 3), (2, 4)))])

    def test_malformed_dict(self):
        with pytest.raises(ConfigError):
            script_from_dict({"participants": [{"name": "X"}]})

    def test_roster_from_script(self):
        script = two_by_two([Participant("s1", "ADA WONG"), Participant("s2", "BEN HUI")])
        roster = roster_from_script(script)
        assert roster.names == ["ADA WONG", "BEN HUI"]


class TestTimeline:
    def test_join_leave_absence_sequence(self):
        script = two_by_two(
            [
                Participant("a", "A A"),
                Participant("b", "B B", join_s=2, leave_s=5),
                Participant("c", "C C", absences=((1, 3),)),
            ],
            duration=6,
        )
        tl = occupancy_timeline(script)
        occupants = [[c.student_id for c in second] for second in tl]
        assert occupants[0] == ["a", "c"]
        assert occupants[2] == ["a", "c", "b"]  # join appends
        assert occupants[5] == ["a", "c"]  # leave drops b, others shift
        faces = {c.student_id: c.face_visible for c in tl[1]}
        assert faces == {"a": True, "c": False}  # camera off, cell kept

    def test_capacity_error_names_second(self):
        parts = [Participant(f"p{i}", f"P {i}") for i in range(4)]
        parts.append(Participant("late", "LATE ONE", join_s=3))
        with pytest.raises(CapacityExceeded, match="second 3"):
            occupancy_timeline(two_by_two(parts, duration=5))


class TestRendering:
    def test_identity_tints_distinct_and_fading(self):
        tints = [identity_tint(i) for i in range(10)]
        assert len(set(tints)) == 10
        base = identity_tint(0)
        faded = identity_tint(10)
        assert faded == pytest.approx(tuple(0.92 * v for v in base))

    def test_render_cell_box_inside_cell(self):
        img, box = render_cell(256, 144, "ADA WONG", 0, True)
        assert img.shape == (144, 256, 3)
        assert box is not None
        assert 0 <= box.x < box.x2 <= 256
        assert 0 <= box.y < box.y2 <= 144

    def test_identities_render_differently(self):
        a, _ = render_cell(256, 144, "X", 0, True)
        b, _ = render_cell(256, 144, "X", 1, True)
        assert not np.array_equal(a, b)

    def test_seconds_change_brightness_deterministically(self):
        a1, _ = render_cell(256, 144, "X", 0, True, seed=2, second=3)
        a2, _ = render_cell(256, 144, "X", 0, True, seed=2, second=3)
        b, _ = render_cell(256, 144, "X", 0, True, seed=2, second=4)
        np.testing.assert_array_equal(a1, a2)
        assert not np.array_equal(a1, b)

    def test_render_frame_fills_boxes(self):
        script = two_by_two([Participant("a", "ADA WONG"), Participant("b", "BEN HUI")])
        tl = occupancy_timeline(script)
        frame, cells = render_frame(script, tl[0], 0)
        assert frame.shape == (288, 512, 3)
        assert all(c.face_box is not None for c in cells)


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    script = two_by_two(
        [
            Participant("s1", "ADA WONG", tint_index=0),
            Participant("s2", "BEN HUI", tint_index=1, absences=((2, 4),)),
            Participant("s3", "MIA KWOK", tint_index=2, join_s=3),
        ],
        duration=6,
        fps=4.0,
    )
    video, truth = generate_video(script, out / "v.mp4", out / "t.json")
    return script, video, truth


class TestGeneratedVideo:
    def test_container_matches_script(self, generated):
        script, video, _ = generated
        meta = probe_video(video)
        assert meta.frame_count == script.frame_count == 24
        assert (meta.width, meta.height) == (512, 288)
        assert meta.fps == pytest.approx(4.0)

    def test_truth_accessors(self, generated):
        script, _, truth = generated
        gt = GroundTruth.load(truth)
        assert gt.duration_s == 6
        assert gt.layout().cell_count == 4
        cells0 = gt.cells_at_second(0)
        assert {c.student_id for c in cells0.values()} == {"s1", "s2"}
        assert gt.cells_at_frame(23) == gt.cells_at_second(5)
        assert gt.face_visible_seconds("s2") == {0, 1, 4, 5}
        assert gt.onscreen_seconds("s2") == {0, 1, 2, 3, 4, 5}
        assert gt.onscreen_seconds("s3") == {3, 4, 5}
        with pytest.raises(ValueError):
            gt.cells_at_second(6)

    def test_truth_boxes_only_when_visible(self, generated):
        _, _, truth = generated
        gt = GroundTruth.load(truth)
        for t in range(6):
            for cell in gt.cells_at_second(t).values():
                assert (cell.face_box is not None) == cell.face_visible
                if cell.face_box is not None:
                    assert isinstance(cell.face_box, PixelRect)

    def test_decoded_frames_carry_readable_strips(self, generated):
        script, video, truth = generated
        gt = GroundTruth.load(truth)
        layout = script.layout()
        frames = {f.index: f.image for f in iter_frames(video) if f.index % 4 == 0}
        for second in (0, 5):
            frame = frames[second * 4]
            for idx, cell in gt.cells_at_second(second).items():
                from examlens.model import CellRef, cell_rect

                rect = cell_rect(layout, CellRef(idx // 2, idx % 2))
                crop = frame[rect.y : rect.y2, rect.x : rect.x2]
                assert read_name(crop) == cell.name
