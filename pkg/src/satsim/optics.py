"""Simulated satellite optics: circular-aperture PSF, convolution, resampling.

The degradation is ``I_sat = downsample(I_uav * PSF, phi)`` where the PSF is
the incoherent point spread function of a circular pupil. Q is defined on
the detector (output) grid; since the convolution happens on the input grid
which is ``phi`` times finer, the incoherent cutoff on that grid is
``1 / (Q * phi)`` cycles per input pixel and the pupil radius is half that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from . import bicubic
from .raster import Raster

MAX_AUTO_SUPPORT = 129
ENERGY_FRACTION = 0.999
DEFAULT_WAVELENGTH = 550e-9
# samples across the pupil radius; sets the frequency grid density
_PUPIL_RADIUS_BINS = 64
_MIN_PERIOD = 1025


@dataclass(frozen=True)
class CameraSpec:
    focal_length: float
    aperture_diameter: float
    pixel_pitch: float
    wavelength: float = DEFAULT_WAVELENGTH

    def __post_init__(self):
        for name in ("wavelength", "focal_length", "aperture_diameter", "pixel_pitch"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def q_from_camera(c: CameraSpec) -> float:
    """Q = wavelength * focal length / (aperture diameter * pixel pitch)."""
    return c.wavelength * c.focal_length / (c.aperture_diameter * c.pixel_pitch)


@dataclass(frozen=True, eq=False)
class PsfKernel:
    weights: np.ndarray
    energy_fraction: float = 1.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
            raise ValueError(f"kernel must be square with odd size, got {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def centre_weight(self) -> float:
        c = self.size // 2
        return float(self.weights[c, c])

    @classmethod
    def impulse(cls) -> "PsfKernel":
        return cls(np.ones((1, 1)))


@dataclass(frozen=True)
class DegradeConfig:
    q: float
    phi: float
    target_gsd: float

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("q must be positive")
        if not self.phi >= 1:
            raise ValueError("phi must be >= 1")
        if not self.target_gsd > 0:
            raise ValueError("target_gsd must be positive")

    @classmethod
    def from_gsd(cls, q: float, source_gsd: float, target_gsd: float) -> "DegradeConfig":
        return cls(q=q, phi=target_gsd / source_gsd, target_gsd=target_gsd)

    @property
    def source_gsd(self) -> float:
        return self.target_gsd / self.phi


class SupportTooSmall(ValueError):
    pass


def _pupil_amplitude(q: float, phi: float, half: int):
    """Amplitude PSF on offsets [-half, half]^2 and its captured energy fraction.

    The pupil is a filled disc on a frequency grid of spacing 1/period, cut to
    the sampled band. The amplitude is its inverse DFT, evaluated only at
    the requested offsets with a matrix Fourier transform.
    """
    radius = 1.0 / (2.0 * q * phi)  # cycles per input pixel
    period = max(_MIN_PERIOD, int(math.ceil(2 * _PUPIL_RADIUS_BINS / radius)))
    period += 1 - period % 2
    band = (period - 1) // 2
    r_bins = radius * period
    kmax = min(band, int(math.floor(r_bins)))
    k = np.arange(-kmax, kmax + 1)
    pupil = (k[:, None] ** 2 + k[None, :] ** 2 <= r_bins * r_bins).astype(np.float64)

    x = np.arange(-half, half + 1)
    # pupil is even along each axis, so the sine terms cancel
    ct = np.cos(2 * np.pi * np.outer(x, k) / period)
    amp = ct @ pupil @ ct.T
    # Parseval: one full period of |amp|^2 carries period^2 * sum(pupil)
    total = period * period * pupil.sum()
    return amp, total


@lru_cache(maxsize=256)
def _psf_cached(q: float, phi: float, support: int | None, max_support: int) -> PsfKernel:
    size = support if support is not None else max_support
    amp, total = _pupil_amplitude(q, phi, size // 2)
    power = amp * amp

    if support is None:
        c = size // 2
        # energy inside centred odd squares of growing size
        chosen = size
        for s in range(1, size + 1, 2):
            h = s // 2
            if power[c - h:c + h + 1, c - h:c + h + 1].sum() >= ENERGY_FRACTION * total:
                chosen = s
                break
        h = chosen // 2
        power = power[c - h:c + h + 1, c - h:c + h + 1]
    fraction = float(power.sum() / total)
    if support is not None and fraction < ENERGY_FRACTION:
        raise SupportTooSmall(
            f"support {support} holds {fraction:.4%} of PSF energy (< {ENERGY_FRACTION:.1%})"
        )
    return PsfKernel(power / power.sum(), energy_fraction=fraction)


def make_psf(q: float, phi: float = 1.0, support: int | None = None,
             max_support: int = MAX_AUTO_SUPPORT) -> PsfKernel:
    """Circular-aperture incoherent PSF for a given Q and GSD ratio.

    With ``support=None`` the kernel is the smallest odd square holding 99.9%
    of the energy, capped at ``max_support``; the truncated kernel is then
    renormalized to unit sum. An explicit ``support`` that cannot hold 99.9%
    raises :class:`SupportTooSmall`.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    if not phi >= 1:
        raise ValueError("phi must be >= 1")
    if support is not None and (support < 1 or support % 2 == 0):
        raise ValueError("support must be a positive odd integer")
    if max_support < 1 or max_support % 2 == 0:
        raise ValueError("max_support must be a positive odd integer")
    return _psf_cached(float(q), float(phi), support, max_support)


def convolve(r: Raster, k: PsfKernel | np.ndarray) -> Raster:
    """Per-channel 2-D convolution with symmetric-reflect borders, same size out."""
    kernel = k.weights if isinstance(k, PsfKernel) else np.asarray(k, dtype=np.float64)
    kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("kernel dimensions must be odd")
    if kh > r.height or kw > r.width:
        raise ValueError(f"kernel {kernel.shape} larger than raster {r.shape}")
    if kh == 1 and kw == 1:
        return r.with_pixels(r.pixels * kernel[0, 0])
    ph, pw = kh // 2, kw // 2
    # offsets are removed first so flat regions carry no transform round-off
    # one channel at a time keeps the peak memory of large rasters down
    out = np.empty_like(r.pixels)
    for c in range(3):
        offset = r.pixels[0, 0, c]
        padded = np.pad(r.pixels[..., c] - offset, ((ph, ph), (pw, pw)), mode="symmetric")
        out[..., c] = fftconvolve(padded, kernel, mode="valid")
        out[..., c] += offset * kernel.sum()
        del padded
    return r.with_pixels(out)


def output_size(n: int, phi: float) -> int:
    # tolerance absorbs ratios like 0.5 / 0.05 = 10.000000000000002
    return int(math.floor(n / phi + 1e-9))


def downsample_bicubic(r: Raster, phi: float) -> Raster:
    """Bicubic (a = -0.5) resample to ``floor(size / phi)``; gsd grows by phi."""
    if not phi >= 1:
        raise ValueError("phi must be >= 1")
    ow, oh = output_size(r.width, phi), output_size(r.height, phi)
    if ow < 1 or oh < 1:
        raise ValueError(f"downsampling {r.shape} by {phi} gives zero area")
    if phi == 1:
        return Raster(r.pixels, r.gsd)
    my = bicubic.resize_matrix(r.height, oh, phi)
    mx = bicubic.resize_matrix(r.width, ow, phi)
    offset = r.pixels[0, 0]
    out = np.einsum("ij,jkc,lk->ilc", my, r.pixels - offset, mx, optimize=True) + offset
    return Raster(out, r.gsd * phi)


def _largest_odd(n: int) -> int:
    return n if n % 2 else n - 1


def degrade(r: Raster, cfg: DegradeConfig) -> Raster:
    """Blur with the Q-parameterized PSF, then bicubically downsample by phi."""
    if abs(r.gsd * cfg.phi - cfg.target_gsd) > 1e-9:
        raise ValueError(
            f"gsd {r.gsd} x phi {cfg.phi} does not reach target gsd {cfg.target_gsd}"
        )
    cap = min(MAX_AUTO_SUPPORT, _largest_odd(min(r.height, r.width)))
    psf = make_psf(cfg.q, cfg.phi, max_support=cap)
    blurred = convolve(r, psf)
    out = downsample_bicubic(blurred, cfg.phi)
    return Raster(out.pixels, cfg.target_gsd)
