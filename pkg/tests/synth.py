"""Synthetic inputs shared by the test modules."""

import numpy as np

from satsim import bicubic
from satsim.raster import Raster
from satsim.registration import SimilarityTransform, image_centre


def similarity_pair(big: Raster, t: SimilarityTransform, size: int):
    """Centre crops of ``big`` before and after ``t`` (applied about the crop centre).

    The moving image samples ``big`` directly, so borders are real texture
    rather than fill.
    """
    h, w = big.shape
    y0, x0 = (h - size) // 2, (w - size) // 2
    c = image_centre(big.shape)
    yy, xx = np.mgrid[y0:y0 + size, x0:x0 + size].astype(float)
    inv = np.linalg.inv(t.matrix())
    px, py = xx - c[0] - t.dx, yy - c[1] - t.dy
    sx = inv[0, 0] * px + inv[0, 1] * py + c[0]
    sy = inv[1, 0] * px + inv[1, 1] * py + c[1]
    fixed = big.crop(x0, y0, size, size)
    return fixed, Raster(bicubic.sample(big.pixels, sx, sy), big.gsd)


def random_similarity(rng) -> SimilarityTransform:
    return SimilarityTransform(rng.uniform(-20, 20), rng.uniform(-20, 20),
                               rng.uniform(-10, 10), rng.uniform(0.95, 1.05))
