"""Keys cubic convolution: resize weights and point sampling.

Coordinates are pixel-index coordinates: pixel ``i`` has its centre at ``i``.
Borders reuse half-sample symmetric reflection (``d c b a | a b c d``).
"""

from __future__ import annotations

import numpy as np

KEYS_A = -0.5


def keys_kernel(x, a: float = KEYS_A):
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def reflect_index(idx, n: int):
    idx = np.asarray(idx)
    if idx.size and (idx.min() < -n or idx.max() >= 2 * n):
        idx = np.mod(idx, 2 * n)
    # single reflection covers everything within one image length of the border
    idx = np.where(idx < 0, -1 - idx, idx)
    return np.where(idx >= n, 2 * n - 1 - idx, idx)


def resize_matrix(n_in: int, n_out: int, ratio: float, a: float = KEYS_A) -> np.ndarray:
    """Dense (n_out, n_in) interpolation matrix for a downscale by ``ratio``.

    Output sample ``j`` sits at input coordinate ``(j + 0.5) * ratio - 0.5`` so
    that pixel areas stay aligned. There is no anti-alias prefilter; callers
    are expected to band-limit first.
    """
    pos = (np.arange(n_out) + 0.5) * ratio - 0.5
    base = np.floor(pos).astype(np.int64)
    frac = pos - base
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for tap in (-1, 0, 1, 2):
        w = keys_kernel(frac - tap, a)
        np.add.at(mat, (rows, reflect_index(base + tap, n_in)), w)
    return mat


def tap_weights(frac, a: float = KEYS_A):
    """Weights of taps -1, 0, 1, 2 for fractional offsets in [0, 1)."""
    t = np.asarray(frac, dtype=np.float64)
    u = 1.0 - t
    t2, u2 = t * t, u * u
    w0 = ((a + 2) * t - (a + 3)) * t2 + 1
    w1 = ((a + 2) * u - (a + 3)) * u2 + 1
    p = 1.0 + t
    q = 2.0 - t
    wm = ((a * p - 5 * a) * p + 8 * a) * p - 4 * a
    w2 = ((a * q - 5 * a) * q + 8 * a) * q - 4 * a
    return wm, w0, w1, w2


def _taps(pos, n, a):
    base = np.floor(pos).astype(np.int64)
    idx = [base + t for t in (-1, 0, 1, 2)]
    if base.size and (base.min() < 1 or base.max() > n - 3):
        idx = [reflect_index(i, n) for i in idx]
    return idx, tap_weights(pos - base, a)


def sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, a: float = KEYS_A) -> np.ndarray:
    """Bicubic values of ``img`` (H, W[, C]) at float positions ``xs``, ``ys``.

    Taps that fall outside the image are reflected back inside.
    """
    h, w = img.shape[:2]
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    ix, wx = _taps(xs, w, a)
    iy, wy = _taps(ys, h, a)

    extra = img.shape[2:]
    flat = img.reshape((h * w,) + extra)
    expand = (...,) + (None,) * len(extra)
    out = np.zeros(xs.shape + extra)
    for j in range(4):
        rowbase = iy[j] * w
        row = wx[0][expand] * flat[rowbase + ix[0]]
        for i in range(1, 4):
            row += wx[i][expand] * flat[rowbase + ix[i]]
        out += wy[j][expand] * row
    return out


def inside(xs: np.ndarray, ys: np.ndarray, width: int, height: int) -> np.ndarray:
    """True where a sample position falls on a source pixel footprint."""
    return (xs >= -0.5) & (xs < width - 0.5) & (ys >= -0.5) & (ys < height - 0.5)
