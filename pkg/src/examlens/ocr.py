"""Name-strip OCR: strip extraction, preprocessing, and text engines.

Gallery cells carry the participant's display name in a strip near the
bottom-left corner. The pipeline is: extract strip -> binarize (zero pixels
below a threshold, keep the rest) -> integer nearest-neighbour upscale ->
engine. The default "template" engine matches glyphs against templates
rendered from the same bundled monospace font the synthetic generator uses,
run through the same degradation, so it needs no external OCR install. A
"tesseract" engine adapter is registered for environments that have it.

Engines are stateless after construction and safe to share across threads.
"""

import math
import string
from dataclasses import dataclass, field
from functools import lru_cache

import cv2
import numpy as np

from . import _kernels, fonts
from .errors import EngineUnavailable

DEFAULT_CHARSET = frozenset(string.ascii_letters + " -'")

# template normalization constants; transcription quality is sensitive to
# these, change them only together with the golden-strip tests
_GLYPH_SIZE = (20, 28)
_INK_LEVEL = 96
_ASPECT_PENALTY = 0.4
_MERGE_GAP_FRAC = 0.15
_SPACE_GAP_FRAC = 1.5
_SMALL_GLYPH_FRAC = 0.45
# a binarized strip that is mostly ink captured the background, not text
_MAX_INK_FRAC = 0.5


@dataclass(frozen=True)
class NameStripSpec:
    """Name strip location as fractions of the cell size."""

    x_frac: float = 0.0
    y_frac: float = 0.85
    w_frac: float = 0.40
    h_frac: float = 0.15

    def __post_init__(self):
        for name in ("x_frac", "y_frac", "w_frac", "h_frac"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.w_frac <= 0 or self.h_frac <= 0:
            raise ValueError("strip must have positive width and height fractions")
        if self.x_frac + self.w_frac > 1.0 + 1e-9 or self.y_frac + self.h_frac > 1.0 + 1e-9:
            raise ValueError("strip extends past the cell edge")


@dataclass(frozen=True)
class OcrConfig:
    engine: str = "template"
    threshold: int = 180
    upscale_k: int = 3
    auto_threshold: bool = True
    allowed_charset: frozenset = field(default_factory=lambda: DEFAULT_CHARSET)

    def __post_init__(self):
        if not (1 <= self.threshold <= 255):
            raise ValueError(f"threshold must be in 1..255, got {self.threshold}")
        if self.upscale_k < 1:
            raise ValueError(f"upscale_k must be >= 1, got {self.upscale_k}")


def to_gray(image: np.ndarray) -> np.ndarray:
    if image.ndim == 3:
        return cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
    return image


def extract_name_strip(cell_image: np.ndarray, spec: NameStripSpec = NameStripSpec()) -> np.ndarray:
    """Cut the name strip out of a cell image; returns grayscale uint8.

    Fractional edges map to pixels as floor(frac * dim + eps) for both the
    start and the end, so a (0, 0.85, 0.40, 0.15) spec on a 256x144 cell
    yields the 102x22 region at (0, 122). The strip is clamped to at least
    one pixel each way.
    """
    eps = 1e-6
    gray = to_gray(cell_image)
    h, w = gray.shape[:2]
    x0 = int(spec.x_frac * w + eps)
    x1 = int((spec.x_frac + spec.w_frac) * w + eps)
    y0 = int(spec.y_frac * h + eps)
    y1 = int((spec.y_frac + spec.h_frac) * h + eps)
    x0 = min(x0, w - 1)
    y0 = min(y0, h - 1)
    x1 = max(x0 + 1, min(x1, w))
    y1 = max(y0 + 1, min(y1, h))
    return np.ascontiguousarray(gray[y0:y1, x0:x1])


def binarize(gray: np.ndarray, threshold: int = 180) -> np.ndarray:
    """Zero pixels below threshold; pixels at or above keep their value.

    Idempotent for a fixed threshold: zeros stay zero, survivors are
    already >= threshold.
    """
    if gray.ndim != 2:
        raise ValueError(f"binarize expects a single-channel image, got shape {gray.shape}")
    if not (0 <= threshold <= 255):
        raise ValueError(f"threshold must be in 0..255, got {threshold}")
    return _kernels.binarize(gray, threshold)


def upscale(img: np.ndarray, k: int = 3) -> np.ndarray:
    """Nearest-neighbour upscale by integer factor k (k=1 is identity)."""
    if img.ndim != 2:
        raise ValueError(f"upscale expects a single-channel image, got shape {img.shape}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k == 1:
        return img.copy()
    return _kernels.upscale_nearest(img, k)


def auto_threshold(gray: np.ndarray) -> int:
    """Otsu split point; used as a retry when the fixed threshold finds nothing."""
    return _kernels.otsu_threshold(gray)


def clean_name(raw: str | None, charset: frozenset = DEFAULT_CHARSET) -> str | None:
    """Canonical name form: drop foreign characters, collapse spaces, uppercase.

    Returns None when nothing survives; idempotent on its own output.
    """
    if raw is None:
        return None
    kept = "".join(ch for ch in raw if ch in charset)
    collapsed = " ".join(kept.split()).upper()
    return collapsed or None


class TemplateOcrEngine:
    """Glyph-template matcher for the fixed-advance name strip font.

    Templates are the uppercase letters rendered at size 16 and pushed
    through the same binarize/upscale degradation the pipeline applies, so
    matching is scale-normalized per glyph and tolerant of the blur mp4
    compression adds. Hyphen and apostrophe are recognized positionally
    (short glyphs near the baseline vs near the cap line).
    """

    name = "template"

    def __init__(self):
        self._templates: list[tuple[str, np.ndarray, float]] = []
        for ch in string.ascii_uppercase:
            rendered = fonts.render_text(ch, size=16, pad=3)
            degraded = _kernels.upscale_nearest(_kernels.binarize(rendered, 180), 3)
            norm, aspect = _normalize_glyph(degraded)
            if norm is None:  # pragma: no cover - uppercase letters always have ink
                continue
            self._templates.append((ch, norm, aspect))

    def info(self) -> dict:
        return {
            "engine": self.name,
            "font": str(fonts.mono_bold_path().name),
            "glyphs": "A-Z plus positional - and '",
            "template_size": list(_GLYPH_SIZE),
        }

    def recognize(self, image: np.ndarray) -> str:
        """Transcribe one line of white-on-dark text; returns the raw string."""
        gray = to_gray(image)
        ink = gray > _INK_LEVEL
        if not ink.any():
            return ""
        row_any = np.flatnonzero(ink.any(axis=1))
        line_top, line_bot = int(row_any[0]), int(row_any[-1])
        line_h = line_bot - line_top + 1
        segments = _segment_columns(ink)
        if not segments:
            return ""
        widths = [b - a for a, b in segments]
        med_w = float(np.median(widths))
        out: list[str] = []
        prev_end = None
        for a, b in segments:
            if prev_end is not None and (a - prev_end) > _SPACE_GAP_FRAC * med_w:
                out.append(" ")
            out.append(self._classify(gray[:, a:b], line_top, line_h))
            prev_end = b
        return "".join(out)

    def _classify(self, seg: np.ndarray, line_top: int, line_h: int) -> str:
        ys = np.flatnonzero((seg > _INK_LEVEL).any(axis=1))
        if len(ys) == 0:
            return " "
        glyph_h = int(ys[-1] - ys[0] + 1)
        if glyph_h < _SMALL_GLYPH_FRAC * line_h:
            rows, _ = np.nonzero(seg > _INK_LEVEL)
            centroid = float(rows.mean())
            return "'" if centroid < line_top + 0.4 * line_h else "-"
        norm, aspect = _normalize_glyph(seg)
        if norm is None:
            return " "
        best_ch = ""
        best_score = -math.inf
        for ch, tmpl, t_aspect in self._templates:
            score = float((norm * tmpl).sum()) - _ASPECT_PENALTY * abs(math.log(aspect / t_aspect))
            if score > best_score:
                best_score = score
                best_ch = ch
        return best_ch


def _segment_columns(ink: np.ndarray) -> list[tuple[int, int]]:
    """Column ink runs, with sub-glyph gaps merged; [a, b) intervals."""
    col_any = ink.any(axis=0)
    runs: list[tuple[int, int]] = []
    start = None
    for i, v in enumerate(col_any):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(col_any)))
    if not runs:
        return []
    med_w = float(np.median([b - a for a, b in runs]))
    merge_gap = max(1.0, _MERGE_GAP_FRAC * med_w)
    merged = [runs[0]]
    for a, b in runs[1:]:
        if a - merged[-1][1] <= merge_gap:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return merged


def _normalize_glyph(seg: np.ndarray) -> tuple[np.ndarray | None, float]:
    """Tight-crop, resize, soften, and L2-normalize a glyph for matching."""
    ys, xs = np.nonzero(seg > _INK_LEVEL)
    if len(ys) == 0:
        return None, 1.0
    g = seg[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    aspect = g.shape[1] / g.shape[0]
    g = cv2.resize(g.astype(np.uint8), _GLYPH_SIZE, interpolation=cv2.INTER_AREA)
    g = (g > _INK_LEVEL).astype(np.float32)
    g = cv2.GaussianBlur(g, (5, 5), 1.2)
    g = g - g.mean()
    n = float(np.linalg.norm(g))
    if n < 1e-9:
        return None, aspect
    return g / n, aspect


class TesseractOcrEngine:
    """Adapter over a system tesseract install, when one exists."""

    name = "tesseract"

    def __init__(self):
        try:
            import pytesseract

            pytesseract.get_tesseract_version()
        except Exception as exc:
            raise EngineUnavailable(f"tesseract OCR is not usable here: {exc}") from exc
        self._pytesseract = pytesseract

    def info(self) -> dict:
        return {"engine": self.name, "version": str(self._pytesseract.get_tesseract_version())}

    def recognize(self, image: np.ndarray) -> str:
        from PIL import Image

        return self._pytesseract.image_to_string(
            Image.fromarray(to_gray(image)), config="--psm 7"
        ).strip()


_ENGINE_TYPES = {
    TemplateOcrEngine.name: TemplateOcrEngine,
    TesseractOcrEngine.name: TesseractOcrEngine,
}


@lru_cache(maxsize=None)
def get_engine(name: str = "template"):
    """Construct (once) and return the named engine.

    Raises EngineUnavailable for unknown names and for engines whose backing
    install is missing.
    """
    if name not in _ENGINE_TYPES:
        raise EngineUnavailable(f"unknown OCR engine {name!r}; known: {sorted(_ENGINE_TYPES)}")
    return _ENGINE_TYPES[name]()


def list_engines() -> dict[str, bool]:
    """Engine name -> constructible in this environment."""
    out = {}
    for name in _ENGINE_TYPES:
        try:
            get_engine(name)
            out[name] = True
        except EngineUnavailable:
            out[name] = False
    return out


def ocr_text(image: np.ndarray, engine: str = "template") -> str:
    return get_engine(engine).recognize(image)


def read_name(
    cell_image: np.ndarray,
    strip_spec: NameStripSpec = NameStripSpec(),
    cfg: OcrConfig = OcrConfig(),
) -> str | None:
    """Full per-cell pipeline: strip -> binarize -> upscale -> engine -> clean.

    When the fixed threshold transcribes nothing and auto_threshold is on,
    retries with the Otsu split of the strip, then with the strip inverted
    (for light-themed cells). Returns None when no attempt yields a name.
    """
    strip = extract_name_strip(cell_image, strip_spec)
    eng = get_engine(cfg.engine)

    def attempt(gray: np.ndarray, threshold: int) -> str | None:
        binary = binarize(gray, threshold)
        # mostly-ink means the threshold kept the background (light theme,
        # washed-out strip); whatever the engine reads off that is noise
        if np.count_nonzero(binary) > _MAX_INK_FRAC * binary.size:
            return None
        prepared = upscale(binary, cfg.upscale_k)
        return clean_name(eng.recognize(prepared), cfg.allowed_charset)

    name = attempt(strip, cfg.threshold)
    if name is not None or not cfg.auto_threshold:
        return name
    otsu = auto_threshold(strip)
    if otsu != cfg.threshold:
        name = attempt(strip, otsu)
        if name is not None:
            return name
    inverted = (255 - strip).astype(np.uint8)
    return attempt(inverted, auto_threshold(inverted))
