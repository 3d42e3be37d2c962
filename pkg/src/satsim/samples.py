"""Bundled and synthetic test imagery."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .raster import Raster, load_raster


def sample_photo(gsd: float = 0.05) -> Raster:
    """512x512 RGB natural photograph (NASA, public domain)."""
    path = resources.files("satsim") / "data" / "astronaut.png"
    with resources.as_file(path) as p:
        return load_raster(p, default_gsd=gsd)


def textured_image(size: int = 1024, seed: int = 0, gsd: float = 0.05, slope: float = 1.6) -> Raster:
    """Grey-ish RGB texture with a power-law spectrum, rescaled to 0-255.

    Used as a stand-in for ground imagery in registration tests: it has
    structure at every scale, like fields seen from above.
    """
    rng = np.random.default_rng(seed)
    h = w = size
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    radius = np.hypot(fy, fx)
    radius[0, 0] = 1.0
    amp = radius ** -slope
    amp[0, 0] = 0.0
    channels = []
    base = np.fft.ifft2(np.fft.fft2(rng.standard_normal((h, w))) * amp).real
    for _ in range(3):
        tint = np.fft.ifft2(np.fft.fft2(rng.standard_normal((h, w))) * amp).real
        channels.append(base + 0.3 * tint)
    img = np.stack(channels, axis=-1)
    img -= img.min()
    img *= 255.0 / img.max()
    return Raster(img, gsd)
