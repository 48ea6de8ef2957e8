"""Image similarity metrics: mean squared error and structural similarity.

SSIM uses uniform 8x8 sliding windows with the standard stabilizers
C1 = (0.01 * 255)^2 and C2 = (0.03 * 255)^2, evaluated per channel and
averaged. Window statistics are computed with box sums over the valid window
grid (no padding). For identical inputs every window term reduces to exactly
1.0 in floating point, so ssim(x, x) == 1.0 holds exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, ImageTooSmall
from .raster import RasterImage

SSIM_WINDOW = 8
_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2


def _as_planes(img) -> np.ndarray:
    if isinstance(img, RasterImage):
        return img.pixels
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    return arr


def mse(a, b) -> float:
    x = _as_planes(a)
    y = _as_planes(b)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))


def _box_sums(plane: np.ndarray, w: int) -> np.ndarray:
    """Sum of every w x w window, via the padded 2-D prefix sum."""
    p = np.zeros((plane.shape[0] + 1, plane.shape[1] + 1))
    p[1:, 1:] = plane.cumsum(axis=0).cumsum(axis=1)
    return p[w:, w:] - p[:-w, w:] - p[w:, :-w] + p[:-w, :-w]


def _ssim_plane(x: np.ndarray, y: np.ndarray, w: int) -> np.ndarray:
    n = float(w * w)
    mu_x = _box_sums(x, w) / n
    mu_y = _box_sums(y, w) / n
    # E[x^2] - E[x]^2 form; identical inputs give bitwise-identical terms so
    # the quotient below is exactly 1 even when roundoff makes them tiny.
    var_x = _box_sums(x * x, w) / n - mu_x * mu_x
    var_y = _box_sums(y * y, w) / n - mu_y * mu_y
    cov = _box_sums(x * y, w) / n - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + _C1) * (2.0 * cov + _C2)
    den = (mu_x * mu_x + mu_y * mu_y + _C1) * (var_x + var_y + _C2)
    return np.clip(num / den, -1.0, 1.0)


def ssim(a, b, window: int = SSIM_WINDOW) -> float:
    x = _as_planes(a)
    y = _as_planes(b)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shape mismatch {x.shape} vs {y.shape}")
    if x.shape[0] < window or x.shape[1] < window:
        raise ImageTooSmall(
            f"image {x.shape[0]}x{x.shape[1]} smaller than {window}x{window} window"
        )
    scores = [
        float(np.mean(_ssim_plane(x[:, :, c], y[:, :, c], window)))
        for c in range(x.shape[2])
    ]
    return float(np.mean(scores))


def max_abs_diff(a, b) -> float:
    x = _as_planes(a)
    y = _as_planes(b)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.max(np.abs(x - y)))
