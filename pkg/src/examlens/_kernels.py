"""Hot numeric kernels with numba and pure-numpy implementations.

The public names (levenshtein, binarize, upscale_nearest, otsu_threshold) are
bound at import time: numba-compiled versions when numba imports cleanly,
pure numpy otherwise. Set EXAMLENS_NO_NUMBA=1 to force the numpy path, e.g.
for debugging or to benchmark one against the other. Both implementations
stay importable (``_py_*`` and, when available, ``_nb_*``) so tests can check
they agree.
"""

import os

import numpy as np

_FORCE_OFF = os.environ.get("EXAMLENS_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency, but stay importable
    _HAVE_NUMBA = False

USING_NUMBA = _HAVE_NUMBA and not _FORCE_OFF


def _encode(s: str) -> np.ndarray:
    # utf-32-le gives one uint32 per code point, so the DP indexes scalars
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32).astype(np.int64)


def _py_levenshtein_arr(a: np.ndarray, b: np.ndarray) -> int:
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = np.arange(m + 1, dtype=np.int64)
    curr = np.empty(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        curr[0] = i
        # vectorized row update is wrong for the running minimum, keep the loop
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            curr[j] = min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + cost)
        prev, curr = curr, prev
    return int(prev[m])


def _py_binarize(gray: np.ndarray, threshold: int) -> np.ndarray:
    """Zero every pixel below threshold, keep the rest unchanged."""
    out = gray.copy()
    out[gray < threshold] = 0
    return out


def _py_upscale_nearest(img: np.ndarray, k: int) -> np.ndarray:
    return np.repeat(np.repeat(img, k, axis=0), k, axis=1)


def _py_otsu_threshold(gray: np.ndarray) -> int:
    """Threshold T maximizing between-class variance; pixels < T are background.

    Returns the split point T in 1..255 such that classes are [0, T) and
    [T, 255]. Ties resolve to the smallest T.
    """
    hist = np.bincount(gray.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    if total == 0:
        return 1
    p = hist / total
    omega = np.cumsum(p)
    mu = np.cumsum(p * np.arange(256, dtype=np.float64))
    mu_total = mu[255]
    # candidate t means background <= t, so the returned threshold is t + 1
    denom = omega * (1.0 - omega)
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_total * omega - mu) ** 2 / denom
    sigma_b[denom <= 0.0] = -1.0
    t = int(np.argmax(sigma_b[:255]))
    return t + 1


if _HAVE_NUMBA:

    @njit(cache=True)
    def _nb_levenshtein_arr(a, b):  # pragma: no cover - exercised via public wrapper
        n, m = len(a), len(b)
        if n == 0:
            return m
        if m == 0:
            return n
        prev = np.arange(m + 1).astype(np.int64)
        curr = np.empty(m + 1, dtype=np.int64)
        for i in range(1, n + 1):
            curr[0] = i
            for j in range(1, m + 1):
                cost = 0 if a[i - 1] == b[j - 1] else 1
                best = prev[j] + 1
                if curr[j - 1] + 1 < best:
                    best = curr[j - 1] + 1
                if prev[j - 1] + cost < best:
                    best = prev[j - 1] + cost
                curr[j] = best
            tmp = prev
            prev = curr
            curr = tmp
        return prev[m]

    @njit(cache=True)
    def _nb_binarize(gray, threshold):  # pragma: no cover
        out = gray.copy()
        rows, cols = gray.shape
        for r in range(rows):
            for c in range(cols):
                if gray[r, c] < threshold:
                    out[r, c] = 0
        return out

    @njit(cache=True)
    def _nb_upscale_nearest(img, k):  # pragma: no cover
        rows, cols = img.shape
        out = np.empty((rows * k, cols * k), dtype=img.dtype)
        for r in range(rows):
            for c in range(cols):
                v = img[r, c]
                for dr in range(k):
                    for dc in range(k):
                        out[r * k + dr, c * k + dc] = v
        return out

    @njit(cache=True)
    def _nb_otsu_threshold(gray):  # pragma: no cover
        hist = np.zeros(256, dtype=np.float64)
        flat = gray.ravel()
        for i in range(flat.size):
            hist[flat[i]] += 1.0
        total = 0.0
        for i in range(256):
            total += hist[i]
        if total == 0.0:
            return 1
        # same cumulative formulation as the numpy path so results match exactly
        best_t = -1
        best_sigma = -1.0
        omega = 0.0
        mu = 0.0
        mu_total = 0.0
        for i in range(256):
            mu_total += (hist[i] / total) * i
        for t in range(255):
            omega += hist[t] / total
            mu += (hist[t] / total) * t
            denom = omega * (1.0 - omega)
            if denom <= 0.0:
                continue
            sigma = (mu_total * omega - mu) ** 2 / denom
            if sigma > best_sigma:
                best_sigma = sigma
                best_t = t
        if best_t < 0:
            return 1
        return best_t + 1


def _py_levenshtein(a: str, b: str) -> int:
    return _py_levenshtein_arr(_encode(a), _encode(b))


if USING_NUMBA:

    def levenshtein(a: str, b: str) -> int:
        """Edit distance (insert/delete/substitute, unit costs)."""
        return int(_nb_levenshtein_arr(_encode(a), _encode(b)))

    def binarize(gray: np.ndarray, threshold: int) -> np.ndarray:
        """Zero pixels below threshold, keep others; uint8 in, uint8 out."""
        return _nb_binarize(np.ascontiguousarray(gray), threshold)

    def upscale_nearest(img: np.ndarray, k: int) -> np.ndarray:
        """Integer nearest-neighbour upscale of a single-channel image."""
        return _nb_upscale_nearest(np.ascontiguousarray(img), k)

    def otsu_threshold(gray: np.ndarray) -> int:
        """Automatic threshold in 1..255; pixels < T count as background."""
        return int(_nb_otsu_threshold(np.ascontiguousarray(gray)))

else:
    levenshtein = _py_levenshtein
    binarize = _py_binarize
    upscale_nearest = _py_upscale_nearest
    otsu_threshold = _py_otsu_threshold
