"""Deterministic text rendering on top of a bundled monospace font.

Both the synthetic video generator (drawing name strips) and the template
OCR engine (building glyph templates) render through this module, so glyph
shapes agree byte for byte without any system font lookup. The font is the
DejaVu Sans Mono Bold that ships inside matplotlib's data directory.

Characters are drawn one at a time with a fixed per-character advance
(font advance plus tracking) so segmentation stays stable even after lossy
video compression blurs glyph edges together.
"""

import math
from functools import lru_cache
from pathlib import Path

import matplotlib
import numpy as np
from PIL import Image, ImageDraw, ImageFont


def mono_bold_path() -> Path:
    path = Path(matplotlib.get_data_path()) / "fonts" / "ttf" / "DejaVuSansMono-Bold.ttf"
    if not path.is_file():  # pragma: no cover - matplotlib always bundles DejaVu
        raise FileNotFoundError(f"bundled font missing: {path}")
    return path


@lru_cache(maxsize=32)
def _font(size: int) -> ImageFont.FreeTypeFont:
    return ImageFont.truetype(str(mono_bold_path()), size)


def char_tracking(size: int) -> int:
    """Extra pixels between characters; keeps bold glyphs separable."""
    return max(2, int(round(0.2 * size)))


def char_advance(size: int) -> float:
    """Horizontal step from one character origin to the next."""
    return _font(size).getlength("A") + char_tracking(size)


def line_height(size: int) -> int:
    ascent, descent = _font(size).getmetrics()
    return ascent + descent


def render_text(text: str, size: int = 16, pad: int = 3) -> np.ndarray:
    """Render white-on-black text as a 2-D uint8 array.

    Every character gets the same advance regardless of the glyph, matching
    how the synthetic name strips are drawn.
    """
    if size < 1:
        raise ValueError(f"font size must be >= 1, got {size}")
    font = _font(size)
    adv = char_advance(size)
    w = int(math.ceil(2 * pad + adv * max(1, len(text))))
    h = 2 * pad + line_height(size)
    img = Image.new("L", (w, h), 0)
    draw = ImageDraw.Draw(img)
    x = float(pad)
    for ch in text:
        draw.text((x, pad), ch, fill=255, font=font)
        x += adv
    return np.asarray(img, dtype=np.uint8)


def ink_width(text: str, size: int) -> float:
    """Horizontal extent of the glyph ink (no trailing tracking)."""
    if not text:
        return 0.0
    return char_advance(size) * (len(text) - 1) + _font(size).getlength("A")


def fit_font_size(text: str, max_w: int, max_h: int, largest: int = 16, smallest: int = 6) -> int:
    """Largest font size whose rendered line fits in max_w x max_h."""
    for size in range(largest, smallest - 1, -1):
        if ink_width(text, size) + 3 <= max_w and line_height(size) + 2 <= max_h:
            return size
    return smallest


def render_name_strip(name: str, w: int, h: int, size: int | None = None) -> np.ndarray:
    """Name strip image: left-aligned white text on black, exactly (h, w).

    When size is omitted the largest fitting size up to 16 is used; text that
    still overflows is clipped at the strip edge.
    """
    if size is None:
        size = fit_font_size(name, w, h)
    # small pad keeps long names inside narrow strips
    line = render_text(name, size=size, pad=2)
    strip = np.zeros((h, w), dtype=np.uint8)
    oy = max(0, (h - line.shape[0]) // 2)
    copy_h = min(line.shape[0], h - oy)
    copy_w = min(line.shape[1], w)
    strip[oy : oy + copy_h, :copy_w] = line[:copy_h, :copy_w]
    return strip
