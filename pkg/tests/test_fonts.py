import numpy as np
import pytest

from examlens import fonts


def test_bundled_font_exists():
    path = fonts.mono_bold_path()
    assert path.is_file()
    assert path.suffix == ".ttf"


def test_render_text_is_white_on_black():
    img = fonts.render_text("A", size=16)
    assert img.dtype == np.uint8
    assert img.ndim == 2
    assert img.max() == 255
    # corners stay background
    assert img[0, 0] == 0 and img[-1, -1] == 0


def test_render_text_deterministic():
    a = fonts.render_text("SAM HO", size=14)
    b = fonts.render_text("SAM HO", size=14)
    np.testing.assert_array_equal(a, b)


def test_empty_text_renders_blank():
    img = fonts.render_text("", size=12)
    assert img.sum() == 0


def test_render_text_rejects_tiny_size():
    with pytest.raises(ValueError):
        fonts.render_text("A", size=0)


def test_advance_grows_with_size():
    advances = [fonts.char_advance(s) for s in range(8, 17)]
    assert all(b > a for a, b in zip(advances, advances[1:]))


def test_tracking_floor():
    assert fonts.char_tracking(6) == 2
    assert fonts.char_tracking(16) == 3


def test_fixed_advance_means_width_scales_with_length():
    w3 = fonts.render_text("AAA", size=14).shape[1]
    w6 = fonts.render_text("AAAAAA", size=14).shape[1]
    iii = fonts.render_text("III", size=14)
    assert iii.shape[1] == w3  # monospace plus fixed tracking
    assert w6 > w3


def test_ink_width_bounds_actual_ink():
    for text in ("ADA WONG", "KIT FONG", "LI MING"):
        for size in (10, 13, 16):
            img = fonts.render_text(text, size=size, pad=3)
            cols = np.where(img.max(axis=0) > 0)[0]
            actual = cols[-1] - cols[0] + 1
            assert actual <= fonts.ink_width(text, size) + 1


def test_fit_font_size_honors_both_limits():
    for name in ("ADA WONG", "MIA KWOK", "ZOE LAM", "A"):
        size = fonts.fit_font_size(name, 102, 22)
        assert fonts.ink_width(name, size) + 3 <= 102
        assert fonts.line_height(size) + 2 <= 22
        # next size up would overflow one of the limits (unless capped at 16)
        if size < 16:
            assert (
                fonts.ink_width(name, size + 1) + 3 > 102
                or fonts.line_height(size + 1) + 2 > 22
            )


def test_fit_font_size_floor():
    assert fonts.fit_font_size("X" * 60, 40, 8) == 6


def test_render_name_strip_shape_and_clip():
    strip = fonts.render_name_strip("EVE LAU", 102, 22)
    assert strip.shape == (22, 102)
    assert strip.max() == 255
    long = fonts.render_name_strip("X" * 80, 50, 10)
    assert long.shape == (10, 50)  # clipped, never resized
