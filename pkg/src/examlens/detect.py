"""Face detection over participant cells.

Two detector kinds share one interface:

- "haar_cascade": a boosted local-binary-pattern cascade (scikit-image's
  bundled frontal-face model). Raw multi-scale hits are clustered by IoU and
  the vote count becomes a confidence, so thresholding behaves like the
  neural path.
- "neural_ssd": a single-shot detector loaded from a user-supplied ONNX
  artifact via cv2.dnn, decoding the standard [1, 1, N, 7] output blob.

Both are tuned for single-pane crops (one person filling most of the image),
the shape gallery cells have, not for full multi-person frames.
"""

import hashlib
import math
import threading
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import cv2
import numpy as np

from .errors import ConfigError, InferenceError, ModelLoadError
from .model import PixelRect

DETECTOR_KINDS = ("haar_cascade", "neural_ssd")

# cascade voting: confidence saturates toward 1 as raw hits pile up
_VOTE_SOFTENER = 3.0
_GROUP_IOU = 0.3
_SCALE_FACTOR = 1.1
_MIN_SIZE_FRAC = 0.25


@dataclass(frozen=True)
class Detection:
    bbox: PixelRect
    confidence: float


@dataclass(frozen=True)
class DetectorSpec:
    kind: str = "haar_cascade"
    model_artifact: str | None = None
    model_sha256: str | None = None
    input_side: int = 300
    min_confidence: float = 0.5

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ConfigError(f"unsupported detector kind {self.kind!r}; known: {DETECTOR_KINDS}")
        if self.input_side < 32:
            raise ConfigError(f"input_side must be >= 32, got {self.input_side}")
        if self.min_confidence < 0:
            raise ConfigError(f"min_confidence must be >= 0, got {self.min_confidence}")


def _iou(a: PixelRect, b: PixelRect) -> float:
    ix = max(0, min(a.x2, b.x2) - max(a.x, b.x))
    iy = max(0, min(a.y2, b.y2) - max(a.y, b.y))
    inter = ix * iy
    union = a.area() + b.area() - inter
    return inter / union if union > 0 else 0.0


class CascadeFaceDetector:
    """LBP cascade with vote-based confidence.

    Clustering inside skimage is disabled (intersection_score_threshold > 1)
    so every raw window survives; we group raw hits ourselves and use the
    cluster size as the vote count. True faces collect roughly an order of
    magnitude more votes than speckle, which makes votes/(votes+k) a usable
    confidence. Cascade state is kept per thread since the underlying
    detector is not documented thread-safe.
    """

    def __init__(self, spec: DetectorSpec):
        import skimage.data

        self.spec = spec
        self._xml = skimage.data.lbp_frontal_face_cascade_filename()
        self._local = threading.local()

    def _cascade(self):
        if not hasattr(self._local, "cascade"):
            from skimage.feature import Cascade

            self._local.cascade = Cascade(self._xml)
        return self._local.cascade

    def detect(self, image: np.ndarray) -> list[Detection]:
        if self.spec.min_confidence > 1.0:
            return []
        gray = image if image.ndim == 2 else cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
        h, w = gray.shape[:2]
        if h < 8 or w < 8:
            return []
        scale = self.spec.input_side / max(h, w)
        if abs(scale - 1.0) > 1e-3:
            gray = cv2.resize(gray, (max(8, round(w * scale)), max(8, round(h * scale))),
                              interpolation=cv2.INTER_AREA if scale < 1 else cv2.INTER_LINEAR)
        sh, sw = gray.shape[:2]
        min_px = max(24, int(_MIN_SIZE_FRAC * min(sh, sw)))
        max_px = max(sh, sw)
        raw = self._cascade().detect_multi_scale(
            img=gray,
            scale_factor=_SCALE_FACTOR,
            step_ratio=1.0,
            min_size=(min_px, min_px),
            max_size=(max_px, max_px),
            min_neighbor_number=1,
            intersection_score_threshold=1.01,
        )
        rects = [PixelRect(int(d["c"]), int(d["r"]), int(d["width"]), int(d["height"])) for d in raw]
        detections = []
        for members in _group_rects(rects):
            votes = len(members)
            conf = votes / (votes + _VOTE_SOFTENER)
            if conf < self.spec.min_confidence:
                continue
            bx = round(sum(m.x for m in members) / votes / scale)
            by = round(sum(m.y for m in members) / votes / scale)
            bw = round(sum(m.w for m in members) / votes / scale)
            bh = round(sum(m.h for m in members) / votes / scale)
            detections.append(Detection(_clip_rect(bx, by, bw, bh, w, h), conf))
        detections.sort(key=lambda d: (-d.confidence, d.bbox.x, d.bbox.y, d.bbox.w))
        return detections


def _group_rects(rects: list[PixelRect]) -> list[list[PixelRect]]:
    """Greedy clustering: each rect joins the first cluster it overlaps."""
    clusters: list[list[PixelRect]] = []
    for r in rects:
        for cluster in clusters:
            if _iou(r, cluster[0]) > _GROUP_IOU:
                cluster.append(r)
                break
        else:
            clusters.append([r])
    return clusters


def _clip_rect(x: int, y: int, w: int, h: int, bound_w: int, bound_h: int) -> PixelRect:
    x = max(0, min(x, bound_w - 1))
    y = max(0, min(y, bound_h - 1))
    w = max(1, min(w, bound_w - x))
    h = max(1, min(h, bound_h - y))
    return PixelRect(x, y, w, h)


class SsdFaceDetector:
    """Single-shot detector behind cv2.dnn, fed square mean-subtracted input."""

    _MEAN = (104.0, 177.0, 123.0)

    def __init__(self, spec: DetectorSpec):
        self.spec = spec
        if not spec.model_artifact:
            raise ModelLoadError("neural_ssd requires model_artifact (path to an ONNX file)")
        path = Path(spec.model_artifact)
        if not path.is_file():
            raise ModelLoadError(f"detector model not found: {path}")
        if spec.model_sha256:
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            if digest != spec.model_sha256.lower():
                raise ModelLoadError(
                    f"detector model checksum mismatch: expected {spec.model_sha256}, got {digest}"
                )
        try:
            self._net = cv2.dnn.readNetFromONNX(str(path))
        except cv2.error as exc:
            raise ModelLoadError(f"could not load detector model {path}: {exc}") from exc
        self._lock = threading.Lock()

    def detect(self, image: np.ndarray) -> list[Detection]:
        if self.spec.min_confidence > 1.0:
            return []
        if image.ndim == 2:
            image = cv2.cvtColor(image, cv2.COLOR_GRAY2BGR)
        h, w = image.shape[:2]
        side = self.spec.input_side
        blob = cv2.dnn.blobFromImage(cv2.resize(image, (side, side)), 1.0, (side, side), self._MEAN)
        try:
            with self._lock:  # cv2 nets are not safe for concurrent forward()
                self._net.setInput(blob)
                raw = self._net.forward()
        except cv2.error as exc:
            raise InferenceError(f"detector forward pass failed: {exc}") from exc
        return decode_ssd_detections(raw, w, h, self.spec.min_confidence)


def decode_ssd_detections(
    raw: np.ndarray, frame_w: int, frame_h: int, min_confidence: float
) -> list[Detection]:
    """Decode an SSD output blob of shape [1, 1, N, 7].

    Rows are (image_id, class_id, confidence, x1, y1, x2, y2) with corners
    normalized to [0, 1]. Degenerate and sub-threshold rows are dropped;
    results come back confidence-descending.
    """
    arr = np.asarray(raw, dtype=np.float64).reshape(-1, 7)
    out = []
    for row in arr:
        conf = float(row[2])
        if not math.isfinite(conf) or conf < min_confidence:
            continue
        x1 = min(max(float(row[3]), 0.0), 1.0) * frame_w
        y1 = min(max(float(row[4]), 0.0), 1.0) * frame_h
        x2 = min(max(float(row[5]), 0.0), 1.0) * frame_w
        y2 = min(max(float(row[6]), 0.0), 1.0) * frame_h
        bw = int(round(x2 - x1))
        bh = int(round(y2 - y1))
        if bw < 1 or bh < 1:
            continue
        out.append(Detection(_clip_rect(int(round(x1)), int(round(y1)), bw, bh, frame_w, frame_h), conf))
    out.sort(key=lambda d: (-d.confidence, d.bbox.x, d.bbox.y, d.bbox.w))
    return out


@lru_cache(maxsize=8)
def load_detector(spec: DetectorSpec):
    """Build (and cache) the detector for a spec."""
    if spec.kind == "haar_cascade":
        return CascadeFaceDetector(spec)
    return SsdFaceDetector(spec)


def detect_faces(image: np.ndarray, spec: DetectorSpec = DetectorSpec()) -> list[Detection]:
    """All face detections in the image meeting spec.min_confidence."""
    return load_detector(spec).detect(image)


def best_detection(detections: list[Detection]) -> Detection | None:
    """Highest-confidence detection, or None."""
    return detections[0] if detections else None


def expand_rect(rect: PixelRect, margin_frac: float, bound_w: int, bound_h: int) -> PixelRect:
    """Grow a rect by margin_frac of its size on every side, clipped to bounds."""
    if margin_frac < 0:
        raise ValueError(f"margin_frac must be >= 0, got {margin_frac}")
    dx = round(margin_frac * rect.w)
    dy = round(margin_frac * rect.h)
    x0 = max(0, rect.x - dx)
    y0 = max(0, rect.y - dy)
    x1 = min(bound_w, rect.x2 + dx)
    y1 = min(bound_h, rect.y2 + dy)
    return PixelRect(x0, y0, max(1, x1 - x0), max(1, y1 - y0))


def crop_face(image: np.ndarray, detection: Detection, margin_frac: float = 0.0) -> np.ndarray:
    """Face crop with a proportional context margin, clipped to the image."""
    h, w = image.shape[:2]
    r = expand_rect(detection.bbox, margin_frac, w, h)
    return np.ascontiguousarray(image[r.y : r.y2, r.x : r.x2])
