"""Multi-temporal alignment and tiling of geo-registered survey images.

Transforms are similarities about the image centre ``c``:
``p' = scale * R(theta) @ (p - c) + c + (dx, dy)`` in pixel-index coordinates
(x right, y down, theta in degrees). :func:`estimate_similarity` returns the
transform ``t`` with ``moving ~= apply_transform(fixed, t)``; align a moving
image with ``apply_transform(moving, t.inverse())``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from . import bicubic
from .blur import to_grayscale
from .raster import Box, LabelSet, PatchPair, Raster, clip_labels

DEFAULT_WINDOW = 2000
DEFAULT_TILE = 5000


class NoOverlapError(ValueError):
    pass


class FeaturelessWindow(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GeoImage:
    raster: Raster
    origin: tuple[float, float] = (0.0, 0.0)  # easting, northing of pixel (0, 0) NW corner
    survey_id: str = ""
    valid: np.ndarray | None = None  # True where pixels came from the source

    def __post_init__(self):
        e, n = self.origin
        if not (math.isfinite(e) and math.isfinite(n)):
            raise ValueError("origin must be finite")
        object.__setattr__(self, "origin", (float(e), float(n)))
        if self.valid is not None and self.valid.shape != self.raster.shape:
            raise ValueError("validity mask shape must match raster")


@dataclass(frozen=True)
class SimilarityTransform:
    dx: float = 0.0
    dy: float = 0.0
    theta: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def matrix(self) -> np.ndarray:
        t = math.radians(self.theta)
        c, s = math.cos(t), math.sin(t)
        return self.scale * np.array([[c, -s], [s, c]])

    def inverse(self) -> "SimilarityTransform":
        inv_lin = np.linalg.inv(self.matrix())
        d = -inv_lin @ np.array([self.dx, self.dy])
        return SimilarityTransform(float(d[0]), float(d[1]), -self.theta, 1.0 / self.scale)

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """Transform applying ``other`` first, then ``self`` (same centre)."""
        d = self.matrix() @ np.array([other.dx, other.dy]) + np.array([self.dx, self.dy])
        theta = (self.theta + other.theta + 180.0) % 360.0 - 180.0
        return SimilarityTransform(float(d[0]), float(d[1]), theta, self.scale * other.scale)

    def as_affine(self, width: int, height: int) -> np.ndarray:
        """3x3 forward matrix in pixel-index coordinates of a width x height image."""
        c = image_centre((height, width))
        a = self.matrix()
        m = np.eye(3)
        m[:2, :2] = a
        m[:2, 2] = c - a @ c + np.array([self.dx, self.dy])
        return m

    def is_identity(self, tol: float = 0.0) -> bool:
        return (abs(self.dx) <= tol and abs(self.dy) <= tol and abs(self.theta) <= tol
                and abs(self.scale - 1.0) <= tol)

    def recentred(self, old_centre, new_centre) -> "SimilarityTransform":
        """Same mapping expressed about a different rotation centre."""
        a = self.matrix()
        delta = np.asarray(new_centre, float) - np.asarray(old_centre, float)
        d = np.array([self.dx, self.dy]) + (a - np.eye(2)) @ delta
        return replace(self, dx=float(d[0]), dy=float(d[1]))


def image_centre(shape) -> np.ndarray:
    h, w = shape[:2]
    return np.array([(w - 1) / 2.0, (h - 1) / 2.0])


# ---------------------------------------------------------------------------
# common extent
# ---------------------------------------------------------------------------

def crop_common_extent(images: Sequence[GeoImage]) -> list[GeoImage]:
    """Crop every image to the footprint shared by all, anchored at its NW corner."""
    if len(images) < 2:
        raise ValueError("need at least two images")
    gsd = images[0].raster.gsd
    for g in images:
        if not math.isclose(g.raster.gsd, gsd, rel_tol=1e-9):
            raise ValueError("all images must share one gsd")

    west = max(g.origin[0] for g in images)
    north = min(g.origin[1] for g in images)
    east = min(g.origin[0] + g.raster.width * gsd for g in images)
    south = max(g.origin[1] - g.raster.height * gsd for g in images)
    width = int(math.floor((east - west) / gsd + 1e-6))
    height = int(math.floor((north - south) / gsd + 1e-6))
    if width < 1 or height < 1:
        raise NoOverlapError("no overlap between survey footprints")

    out = []
    for g in images:
        x0 = int(round((west - g.origin[0]) / gsd))
        y0 = int(round((g.origin[1] - north) / gsd))
        valid = None if g.valid is None else g.valid[y0:y0 + height, x0:x0 + width]
        out.append(GeoImage(g.raster.crop(x0, y0, width, height), (west, north), g.survey_id, valid))
    return out


# ---------------------------------------------------------------------------
# phase correlation
# ---------------------------------------------------------------------------

def _hann2d(h: int, w: int) -> np.ndarray:
    return np.outer(np.hanning(h), np.hanning(w))


def _upsampled_peak(cross: np.ndarray, centre: np.ndarray, half: float, step: float) -> tuple[np.ndarray, float]:
    """Evaluate the inverse DFT of ``cross`` on a fine grid around ``centre``."""
    h, w = cross.shape
    offs = np.arange(-half, half + step / 2, step)
    ys, xs = centre[0] + offs, centre[1] + offs
    ky = np.fft.fftfreq(h) * h
    kx = np.fft.fftfreq(w) * w
    ey = np.exp(2j * np.pi * np.outer(ys, ky) / h)
    ex = np.exp(2j * np.pi * np.outer(kx, xs) / w)
    surface = (ey @ cross @ ex).real
    iy, ix = np.unravel_index(np.argmax(surface), surface.shape)
    return np.array([ys[iy], xs[ix]]), float(surface[iy, ix] / (h * w))


def phase_correlate(a: np.ndarray, b: np.ndarray, window: bool = True,
                    refine: int = 3) -> tuple[np.ndarray, float]:
    """Shift ``(dy, dx)`` such that ``b(p) ~= a(p - shift)``, and the peak height.

    The integer peak of the phase-only correlation is refined by evaluating
    the band-limited correlation surface on successively finer grids.
    """
    if a.shape != b.shape:
        raise ValueError("phase_correlate needs equally sized arrays")
    h, w = a.shape
    if window is True:
        win = _hann2d(h, w)
    elif window is False or window is None:
        win = 1.0
    else:
        win = window
    fa = np.fft.fft2((a - a.mean()) * win)
    fb = np.fft.fft2((b - b.mean()) * win)
    cross = fb * np.conj(fa)
    mag = np.abs(cross)
    cross = np.where(mag > 1e-12 * mag.max(), cross / np.maximum(mag, 1e-300), 0)
    corr = np.fft.ifft2(cross).real
    iy, ix = np.unravel_index(np.argmax(corr), corr.shape)
    peak = np.array([iy if iy <= h // 2 else iy - h, ix if ix <= w // 2 else ix - w], dtype=float)
    height = float(corr[iy, ix])
    half, step = 1.0, 0.1
    for _ in range(refine):
        peak, height = _upsampled_peak(cross, peak, half, step)
        half, step = step, step / 10
    return peak, height


# ---------------------------------------------------------------------------
# similarity estimation
# ---------------------------------------------------------------------------

def _centre_window(gray: np.ndarray, size: int) -> np.ndarray:
    h, w = gray.shape
    y0, x0 = (h - size) // 2, (w - size) // 2
    return gray[y0:y0 + size, x0:x0 + size]


def _highpass(n: int) -> np.ndarray:
    f = np.fft.fftshift(np.fft.fftfreq(n))
    x = np.outer(np.cos(np.pi * f), np.cos(np.pi * f))
    return (1.0 - x) * (2.0 - x)


def _log_polar(spectrum: np.ndarray, n_angle: int, n_radius: int, r_min: float, r_max: float) -> np.ndarray:
    n = spectrum.shape[0]
    c = n // 2
    angles = np.arange(n_angle) * np.pi / n_angle
    log_r = np.log(r_min) + np.arange(n_radius) * (np.log(r_max / r_min) / n_radius)
    radii = np.exp(log_r)
    ys = c + radii[None, :] * np.sin(angles)[:, None]
    xs = c + radii[None, :] * np.cos(angles)[:, None]
    return ndimage.map_coordinates(spectrum, [ys, xs], order=3, mode="nearest")


class _LogPolarSpectrum:
    """High-passed magnitude spectrum of a square window in log-polar form."""

    def __init__(self, img: np.ndarray):
        n = img.shape[0]
        self.n_angle = self.n_radius = n
        self.r_min, self.r_max = max(2.0, n / 64.0), 0.45 * n
        f = np.fft.fftshift(np.fft.fft2((img - img.mean()) * _hann2d(n, n)))
        mag = np.abs(f) * _highpass(n)
        self.image = _log_polar(mag, self.n_angle, self.n_radius, self.r_min, self.r_max)


def _rotation_scale(fixed: _LogPolarSpectrum, moving: np.ndarray) -> tuple[float, float]:
    lp = _LogPolarSpectrum(moving)
    # angle axis is periodic; only the radius axis needs tapering
    taper = np.broadcast_to(np.hanning(lp.n_radius)[None, :], lp.image.shape)
    (d_angle, d_radius), _ = phase_correlate(fixed.image, lp.image, window=taper)
    theta = d_angle * 180.0 / lp.n_angle
    theta = (theta + 90.0) % 180.0 - 90.0
    # image scale s shrinks the spectrum by 1/s
    scale = math.exp(-d_radius * math.log(lp.r_max / lp.r_min) / lp.n_radius)
    return theta, scale


def _resample_gray(gray: np.ndarray, t: SimilarityTransform) -> np.ndarray:
    """Output(p') = gray(p) with p' = t(p), via a cubic spline (estimation only)."""
    c = image_centre(gray.shape)
    inv = np.linalg.inv(t.matrix())
    # ndimage works in (row, col) order
    swap = np.array([[0, 1], [1, 0]])
    mat = swap @ inv @ swap
    src_origin = c - inv @ (c + np.array([t.dx, t.dy]))
    return ndimage.affine_transform(gray, mat, offset=src_origin[::-1], order=3, mode="reflect")


def _decimate(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    return img[:h - h % 2, :w - w % 2].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _translation_after(fixed, moving, rs: SimilarityTransform):
    """Translation left once rotation/scale ``rs`` is undone, and its peak."""
    # undoing rotation/scale leaves a translation of (sR)^-1 d
    derot = _resample_gray(moving, rs.inverse())
    (sy, sx), peak = phase_correlate(fixed, derot)
    d = rs.matrix() @ np.array([sx, sy])
    return d, peak


def _estimate_window(fixed: np.ndarray, moving: np.ndarray, fixed_lp: _LogPolarSpectrum,
                     flip_check: bool = True) -> SimilarityTransform:
    theta, scale = _rotation_scale(fixed_lp, moving)
    if flip_check:
        # magnitude spectra cannot tell theta from theta + 180; decide on a
        # half-resolution copy where only the peak height matters
        small_f, small_m = _decimate(fixed), _decimate(moving)
        peaks = [_translation_after(small_f, small_m, SimilarityTransform(0, 0, th, scale))[1]
                 for th in (theta, theta + 180.0)]
        if peaks[1] > peaks[0]:
            theta += 180.0
    theta = float((theta + 180.0) % 360.0 - 180.0)
    rs = SimilarityTransform(0.0, 0.0, theta, scale)
    d, _ = _translation_after(fixed, moving, rs)
    return SimilarityTransform(float(d[0]), float(d[1]), theta, scale)


def estimate_similarity(fixed: GeoImage | Raster, moving: GeoImage | Raster,
                        window: int = DEFAULT_WINDOW, iterations: int = 2) -> SimilarityTransform:
    """Similarity transform relating ``moving`` to ``fixed`` via phase correlation.

    Uses the centred ``window`` x ``window`` patch (shrunk to the largest even
    size that fits). Rotation and scale come from the log-polar magnitude
    spectra, translation from a second phase correlation after undoing them.
    Extra ``iterations`` re-estimate the residual after a first correction.
    """
    fr = fixed.raster if isinstance(fixed, GeoImage) else fixed
    mr = moving.raster if isinstance(moving, GeoImage) else moving
    if fr.shape != mr.shape:
        raise ValueError("fixed and moving must have identical dimensions")
    size = min(window, fr.height, fr.width)
    size -= size % 2
    if size < 16:
        raise ValueError(f"window {size} too small for registration")
    gf = _centre_window(to_grayscale(fr), size)
    gm = _centre_window(to_grayscale(mr), size)
    for g in (gf, gm):
        if np.std(g) < 1e-6:
            raise FeaturelessWindow("featureless window: no texture to correlate")

    fixed_lp = _LogPolarSpectrum(gf)
    total = SimilarityTransform()
    current = gm
    iterations = max(1, iterations)
    for it in range(iterations):
        step = _estimate_window(gf, current, fixed_lp, flip_check=(it == 0))
        total = total.compose(step)
        if it + 1 < iterations:
            current = _resample_gray(gm, total.inverse())
    # window centre to full-image centre
    h, w = fr.shape
    y0, x0 = (h - size) // 2, (w - size) // 2
    win_c = image_centre((size, size)) + np.array([x0, y0])
    return total.recentred(win_c, image_centre(fr.shape))


# ---------------------------------------------------------------------------
# resampling and tiling
# ---------------------------------------------------------------------------

def apply_transform(g: GeoImage | Raster, t: SimilarityTransform) -> GeoImage:
    """Resample under ``t`` (bicubic); pixels with no source are black and invalid."""
    if isinstance(g, Raster):
        g = GeoImage(g)
    r = g.raster
    if t.is_identity():
        valid = np.ones(r.shape, bool) if g.valid is None else g.valid
        return replace(g, valid=valid)
    h, w = r.shape
    c = image_centre(r.shape)
    inv = np.linalg.inv(t.matrix())
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    px = xx - c[0] - t.dx
    py = yy - c[1] - t.dy
    sx = inv[0, 0] * px + inv[0, 1] * py + c[0]
    sy = inv[1, 0] * px + inv[1, 1] * py + c[1]
    valid = bicubic.inside(sx, sy, w, h)
    out = bicubic.sample(r.pixels, sx, sy)
    out[~valid] = 0.0
    if g.valid is not None:
        src_valid = g.valid[np.clip(np.rint(sy), 0, h - 1).astype(int),
                            np.clip(np.rint(sx), 0, w - 1).astype(int)]
        valid &= src_valid
    return replace(g, raster=r.with_pixels(out), valid=valid)


@dataclass(frozen=True, eq=False)
class Tile:
    geo_id: tuple[int, int]
    x0: int
    y0: int
    size: int
    image_shape: tuple[int, int]  # (height, width) of the aligned set
    patches: dict[str, Raster]

    @property
    def name(self) -> str:
        return geo_id_str(self.geo_id)


def geo_id_str(geo_id: tuple[int, int]) -> str:
    return f"{geo_id[0]}_{geo_id[1]}"


def tile_grid(shape: tuple[int, int], tile: int) -> list[tuple[tuple[int, int], int, int]]:
    """Row-major ``((row, col), x0, y0)`` of the full tiles in an image of ``shape``."""
    if tile < 1:
        raise ValueError("tile must be >= 1")
    h, w = shape[:2]
    return [((row, col), col * tile, row * tile) for row in range(h // tile) for col in range(w // tile)]


def tile_aligned_set(images: Sequence[GeoImage], tile: int = DEFAULT_TILE,
                     require_valid: bool = True, exclude: Sequence[tuple[int, int]] = ()) -> list[Tile]:
    """Row-major grid of full ``tile`` x ``tile`` windows shared by every survey.

    Partial edge tiles are discarded. With ``require_valid`` a tile is dropped
    when any survey has invalid (out-of-source) pixels inside it.
    """
    if tile < 1:
        raise ValueError("tile must be >= 1")
    if not images:
        return []
    shape = images[0].raster.shape
    for g in images:
        if g.raster.shape != shape:
            raise ValueError("images have mismatched extents; crop and align first")
    ids = [g.survey_id for g in images]
    if len(set(ids)) != len(ids):
        raise ValueError("survey ids must be unique")
    excluded = {tuple(e) for e in exclude}

    tiles = []
    for geo_id, x0, y0 in tile_grid(shape, tile):
        if geo_id in excluded:
            continue
        if require_valid and any(
            g.valid is not None and not g.valid[y0:y0 + tile, x0:x0 + tile].all() for g in images
        ):
            continue
        patches = {g.survey_id: g.raster.crop(x0, y0, tile, tile) for g in images}
        tiles.append(Tile(geo_id, x0, y0, tile, shape, patches))
    return tiles


def labels_for_window(labels: LabelSet, image_shape: tuple[int, int],
                      x0: int, y0: int, width: int, height: int) -> LabelSet:
    """Re-express whole-image labels in a window's normalized coordinates."""
    ih, iw = image_shape
    moved = []
    for b in labels:
        cx = (b.cx * iw - x0) / width
        cy = (b.cy * ih - y0) / height
        moved.append(Box(b.class_id, cx, cy, b.w * iw / width, b.h * ih / height))
    return clip_labels(moved)


def tile_labels(tile: Tile, labels: LabelSet) -> LabelSet:
    return labels_for_window(labels, tile.image_shape, tile.x0, tile.y0, tile.size, tile.size)


def make_patch_pairs(tiles: Sequence[Tile], labels: Mapping[str, LabelSet] | None = None) -> list[PatchPair]:
    """One pair per unordered survey combination per tile, in lexicographic order."""
    labels = labels or {}
    pairs = []
    for t in tiles:
        ids = sorted(t.patches)
        local = {s: tile_labels(t, labels.get(s, LabelSet())) for s in ids}
        for a, b in itertools.combinations(ids, 2):
            pairs.append(PatchPair(t.patches[a], t.patches[b], local[a], local[b], t.geo_id, a, b))
    return pairs
