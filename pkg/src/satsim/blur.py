"""Laplacian-variance (LV) sharpness metric. Lower LV means a blurrier image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import Raster

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
# 8-neighbour Laplacian; entries 1/6, 2/3 and -10/3 sum to exactly zero
LAPLACIAN_KERNEL = np.array([[1.0, 4.0, 1.0],
                             [4.0, -20.0, 4.0],
                             [1.0, 4.0, 1.0]]) / 6.0


@dataclass(frozen=True)
class BlurReport:
    lv: float
    width: int
    height: int


def to_grayscale(r: Raster) -> np.ndarray:
    """Rec. 601 luma on the 0-255 scale, shape (height, width)."""
    return r.pixels @ LUMA_WEIGHTS


def laplacian_response(gray: np.ndarray) -> np.ndarray:
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ValueError("expected a single-channel 2-D array")
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        raise ValueError(f"raster {gray.shape} smaller than 3x3")
    # zero-sum kernel: removing an offset first is free and keeps flat areas at exactly 0
    centred = gray - gray.flat[0]
    return ndimage.convolve(centred, LAPLACIAN_KERNEL, mode="reflect")


def laplacian_variance(r: Raster) -> BlurReport:
    response = laplacian_response(to_grayscale(r))
    shifted = response - response.flat[0]
    lv = float(np.mean((shifted - shifted.mean()) ** 2))
    return BlurReport(lv=lv, width=r.width, height=r.height)
