"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run:  python3 benchmarks/bench_kernels.py
The public bindings follow EXAMLENS_NO_NUMBA; this script times both
implementation sets directly, so one run covers both paths (numba timings
exclude the first warm-up call, which pays compilation).
"""

import time

import numpy as np

from examlens import _kernels


def _time(fn, *args, repeat=5):
    fn(*args)  # warm-up: numba compiles here, caches fill
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    gray = rng.integers(0, 256, size=(720, 1280), dtype=np.uint8)
    strip = rng.integers(0, 256, size=(22, 102), dtype=np.uint8)
    name_a = "CHRISTOPHER ALEXANDER WONG" * 4
    name_b = "CHRISTOFER ALEXANDRE WANG" * 4

    if not _kernels._HAVE_NUMBA:
        print("numba unavailable; nothing to compare")
        return

    rows = [
        (
            "levenshtein (104 chars)",
            lambda: _kernels._py_levenshtein(name_a, name_b),
            lambda: _kernels._nb_levenshtein_arr(_kernels._encode(name_a), _kernels._encode(name_b)),
        ),
        (
            "binarize (720p gray)",
            lambda: _kernels._py_binarize(gray, 180),
            lambda: _kernels._nb_binarize(gray, 180),
        ),
        (
            "upscale_nearest x3 (strip)",
            lambda: _kernels._py_upscale_nearest(strip, 3),
            lambda: _kernels._nb_upscale_nearest(strip, 3),
        ),
        (
            "otsu_threshold (720p gray)",
            lambda: _kernels._py_otsu_threshold(gray),
            lambda: _kernels._nb_otsu_threshold(gray),
        ),
    ]

    print(f"{'kernel':<28} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for label, py_fn, nb_fn in rows:
        t_py = _time(py_fn)
        t_nb = _time(nb_fn)
        print(f"{label:<28} {t_py * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us {t_py / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
