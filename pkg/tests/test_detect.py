"""Face detection: cascade behavior on rendered cells, grouping, SSD decode."""

import numpy as np
import pytest

from examlens.detect import (
    CascadeFaceDetector,
    Detection,
    DetectorSpec,
    SsdFaceDetector,
    _group_rects,
    best_detection,
    crop_face,
    decode_ssd_detections,
    detect_faces,
    expand_rect,
    load_detector,
)
from examlens.errors import ConfigError, ModelLoadError
from examlens.model import PixelRect
from examlens.synthgen import render_cell


def iou(a: PixelRect, b: PixelRect) -> float:
    ix = max(0, min(a.x2, b.x2) - max(a.x, b.x))
    iy = max(0, min(a.y2, b.y2) - max(a.y, b.y))
    inter = ix * iy
    return inter / (a.area() + b.area() - inter) if inter else 0.0


class TestSpec:
    def test_defaults(self):
        spec = DetectorSpec()
        assert spec.kind == "haar_cascade"
        assert spec.min_confidence == 0.5

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            DetectorSpec(kind="yolo")

    def test_bounds(self):
        with pytest.raises(ConfigError):
            DetectorSpec(input_side=16)
        with pytest.raises(ConfigError):
            DetectorSpec(min_confidence=-0.1)


class TestCascadeOnRenderedCells:
    def test_face_found_with_good_iou(self):
        cell, truth = render_cell(256, 144, "SAM HO", 7, True, seed=3, second=20)
        det = best_detection(detect_faces(cell))
        assert det is not None
        assert 0.5 < det.confidence <= 1.0
        assert iou(det.bbox, truth) >= 0.5

    def test_every_identity_detected(self):
        for identity in range(10):
            cell, truth = render_cell(256, 144, "X", identity, True, seed=3, second=5)
            det = best_detection(detect_faces(cell))
            assert det is not None, f"identity {identity} missed"
            assert iou(det.bbox, truth) >= 0.5

    def test_no_face_in_strip_only_cell(self):
        cell, _ = render_cell(256, 144, "ZOE LAM", 3, face_visible=False)
        assert best_detection(detect_faces(cell)) is None

    def test_no_face_in_empty_pane(self):
        cell, _ = render_cell(256, 144, "", None, False)
        assert detect_faces(cell) == []

    def test_tiny_image_is_safe(self):
        assert detect_faces(np.zeros((4, 4, 3), dtype=np.uint8)) == []

    def test_confidence_threshold_filters(self):
        cell, _ = render_cell(256, 144, "SAM HO", 7, True, seed=3, second=20)
        spec_any = DetectorSpec(min_confidence=0.0)
        spec_impossible = DetectorSpec(min_confidence=1.01)
        assert len(detect_faces(cell, spec_any)) >= 1
        assert detect_faces(cell, spec_impossible) == []

    def test_grayscale_input_accepted(self):
        cell, _ = render_cell(256, 144, "SAM HO", 7, True, seed=3, second=20)
        gray = cell.mean(axis=2).astype(np.uint8)
        assert best_detection(detect_faces(gray)) is not None


class TestGrouping:
    def test_far_rects_stay_apart(self):
        a = PixelRect(0, 0, 10, 10)
        b = PixelRect(100, 100, 10, 10)
        assert len(_group_rects([a, b])) == 2

    def test_overlapping_rects_merge(self):
        a = PixelRect(0, 0, 20, 20)
        b = PixelRect(2, 2, 20, 20)
        groups = _group_rects([a, b])
        assert len(groups) == 1 and len(groups[0]) == 2

    def test_vote_confidence_monotone(self):
        # votes / (votes + 3): more agreeing boxes, higher confidence
        def conf(votes):
            return votes / (votes + 3.0)

        assert conf(1) == pytest.approx(0.25)
        assert conf(9) == pytest.approx(0.75)
        c = [conf(v) for v in range(1, 12)]
        assert c == sorted(c) and all(x < 1.0 for x in c)


class TestSsd:
    def test_requires_artifact(self):
        with pytest.raises(ModelLoadError, match="model_artifact"):
            SsdFaceDetector(DetectorSpec(kind="neural_ssd"))

    def test_missing_file(self, tmp_path):
        spec = DetectorSpec(kind="neural_ssd", model_artifact=str(tmp_path / "net.onnx"))
        with pytest.raises(ModelLoadError, match="not found"):
            SsdFaceDetector(spec)

    def test_checksum_mismatch(self, tmp_path):
        p = tmp_path / "net.onnx"
        p.write_bytes(b"weights")
        spec = DetectorSpec(kind="neural_ssd", model_artifact=str(p), model_sha256="0" * 64)
        with pytest.raises(ModelLoadError, match="checksum"):
            SsdFaceDetector(spec)

    def test_decode_blob(self):
        raw = np.array(
            [
                [
                    [
                        [0, 1, 0.9, 0.10, 0.20, 0.30, 0.40],
                        [0, 1, 0.3, 0.00, 0.00, 0.50, 0.50],  # below threshold
                        [0, 1, 0.8, 0.60, 0.60, 0.60, 0.61],  # degenerate width
                        [0, 1, 0.7, -0.2, 0.50, 0.40, 1.40],  # clipped into frame
                    ]
                ]
            ],
            dtype=np.float32,
        )
        dets = decode_ssd_detections(raw, 200, 100, 0.5)
        assert [round(d.confidence, 2) for d in dets] == [0.9, 0.7]
        top = dets[0].bbox
        assert (top.x, top.y, top.w, top.h) == (20, 20, 40, 20)
        clipped = dets[1].bbox
        assert clipped.x == 0 and clipped.y2 <= 100

    def test_decode_empty(self):
        assert decode_ssd_detections(np.zeros((1, 1, 0, 7)), 100, 100, 0.5) == []


class TestHelpers:
    def test_best_detection_picks_top(self):
        lo = Detection(PixelRect(0, 0, 5, 5), 0.4)
        hi = Detection(PixelRect(1, 1, 5, 5), 0.9)
        assert best_detection([hi, lo]) is hi
        assert best_detection([]) is None

    def test_expand_rect(self):
        r = expand_rect(PixelRect(10, 10, 20, 20), 0.25, 100, 100)
        assert (r.x, r.y, r.w, r.h) == (5, 5, 30, 30)

    def test_expand_rect_clips(self):
        r = expand_rect(PixelRect(0, 0, 20, 20), 0.5, 25, 25)
        assert (r.x, r.y) == (0, 0)
        assert r.x2 <= 25 and r.y2 <= 25

    def test_expand_rect_rejects_negative(self):
        with pytest.raises(ValueError):
            expand_rect(PixelRect(0, 0, 5, 5), -0.1, 10, 10)

    def test_crop_face_shape(self):
        img = np.zeros((100, 200, 3), dtype=np.uint8)
        det = Detection(PixelRect(50, 20, 40, 40), 0.8)
        crop = crop_face(img, det, 0.25)
        assert crop.shape == (60, 60, 3)
        assert crop.flags["C_CONTIGUOUS"]

    def test_load_detector_cached(self):
        spec = DetectorSpec()
        assert load_detector(spec) is load_detector(DetectorSpec())
        assert isinstance(load_detector(spec), CascadeFaceDetector)
