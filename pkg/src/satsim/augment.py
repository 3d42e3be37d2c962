"""Paired augmentations that keep two co-registered patches and their labels in step.

All randomness comes from ``AugmentConfig.seed``. Each operation draws from
its own child stream, so switching one operation off leaves the others'
samples unchanged. Geometric matrices are 3x3 forward maps in pixel-index
coordinates (pixel ``i`` centred at ``i``, y pointing down).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import bicubic
from .raster import Box, LabelSet, PatchPair, Raster, clip_labels

OPS = ("mirror", "rotate", "scale", "shear", "shift", "align", "warp",
       "colour", "hue", "saturation", "value", "noise")


@dataclass(frozen=True)
class AugmentConfig:
    """Augmentation magnitudes; the defaults are the identity configuration."""

    rotate: tuple[float, float] = (0.0, 0.0)
    align_shift_sd: float = 0.0
    shift_sd: float = 0.0
    colour_sd: float = 0.0
    hue_sd: float = 0.0
    saturation_sd: float = 0.0
    value_sd: float = 0.0
    mirror_prob_ud: float = 0.0
    mirror_prob_lr: float = 0.0
    scale_sd: float = 0.0
    noise_sd: float = 0.0
    shear_sd: float = 0.0
    warp_max: float = 0.0
    warp_filter_width: float = 4.0
    warp_independent: bool = False
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.rotate
        object.__setattr__(self, "rotate", (float(lo), float(hi)))
        if lo > hi:
            raise ValueError("rotate min must not exceed max")
        for f in ("align_shift_sd", "shift_sd", "colour_sd", "hue_sd", "saturation_sd",
                  "value_sd", "scale_sd", "noise_sd", "shear_sd", "warp_max"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be >= 0")
        for f in ("mirror_prob_ud", "mirror_prob_lr"):
            if not 0.0 <= getattr(self, f) <= 1.0:
                raise ValueError(f"{f} must be a probability")
        if not self.warp_filter_width > 0:
            raise ValueError("warp_filter_width must be > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown augmentation keys: {sorted(unknown)}")
        d = dict(d)
        if "rotate" in d:
            d["rotate"] = tuple(d["rotate"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "AugmentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rotate"] = list(self.rotate)
        return d


# ---------------------------------------------------------------------------
# geometric helpers
# ---------------------------------------------------------------------------

def _centre(width: int, height: int) -> tuple[float, float]:
    return (width - 1) / 2.0, (height - 1) / 2.0


def _about_centre(lin: np.ndarray, width: int, height: int) -> np.ndarray:
    cx, cy = _centre(width, height)
    m = np.eye(3)
    m[:2, :2] = lin
    m[:2, 2] = np.array([cx, cy]) - lin @ np.array([cx, cy])
    return m


def mirror_matrix(width: int, height: int, up_down: bool = False, left_right: bool = False) -> np.ndarray:
    return _about_centre(np.diag([-1.0 if left_right else 1.0, -1.0 if up_down else 1.0]), width, height)


def rotation_matrix(degrees: float, width: int, height: int) -> np.ndarray:
    """Counter-clockwise as displayed (y down) about the image centre."""
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    return _about_centre(np.array([[c, s], [-s, c]]), width, height)


def scale_matrix(factor: float, width: int, height: int) -> np.ndarray:
    return _about_centre(np.eye(2) * factor, width, height)


def shear_matrix(ratio: float, width: int, height: int) -> np.ndarray:
    """Horizontal shear ``x += ratio * (y - centre_y)``."""
    return _about_centre(np.array([[1.0, ratio], [0.0, 1.0]]), width, height)


def shift_matrix(dx: float, dy: float) -> np.ndarray:
    m = np.eye(3)
    m[:2, 2] = dx, dy
    return m


def warp_affine(pixels: np.ndarray, forward: np.ndarray) -> np.ndarray:
    """Resample under a forward affine map; uncovered pixels become black."""
    h, w = pixels.shape[:2]
    inv = np.linalg.inv(forward)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = inv[0, 0] * xx + inv[0, 1] * yy + inv[0, 2]
    sy = inv[1, 0] * xx + inv[1, 1] * yy + inv[1, 2]
    out = bicubic.sample(pixels, sx, sy)
    out[~bicubic.inside(sx, sy, w, h)] = 0.0
    return out


def transform_labels(labels: LabelSet, forward: np.ndarray, width: int, height: int) -> LabelSet:
    """Map box corners through ``forward`` and keep the axis-aligned hull, clipped."""
    if np.array_equal(forward, np.eye(3)):
        return labels
    moved = []
    for b in labels:
        # normalized -> pixel-index coordinates (centres at integers)
        x0, x1 = (b.cx - b.w / 2) * width - 0.5, (b.cx + b.w / 2) * width - 0.5
        y0, y1 = (b.cy - b.h / 2) * height - 0.5, (b.cy + b.h / 2) * height - 0.5
        corners = np.array([[x0, x1, x0, x1], [y0, y0, y1, y1], [1, 1, 1, 1]])
        px, py, _ = forward @ corners
        nx0, nx1 = (px.min() + 0.5) / width, (px.max() + 0.5) / width
        ny0, ny1 = (py.min() + 0.5) / height, (py.max() + 0.5) / height
        moved.append(Box(b.class_id, (nx0 + nx1) / 2, (ny0 + ny1) / 2, nx1 - nx0, ny1 - ny0))
    return clip_labels(moved)


# ---------------------------------------------------------------------------
# local warp
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WarpField:
    u_offsets: np.ndarray  # x displacement, pixels
    v_offsets: np.ndarray  # y displacement, pixels

    @property
    def shape(self) -> tuple[int, int]:
        return self.u_offsets.shape

    def max_offset(self) -> float:
        return float(max(np.abs(self.u_offsets).max(), np.abs(self.v_offsets).max()))


def _smooth_noise(rng: np.random.Generator, height: int, width: int, filter_width: float) -> np.ndarray:
    noise = rng.standard_normal((height, width))
    ky = np.fft.fftfreq(height)[:, None] * height
    kx = np.fft.fftfreq(width)[None, :] * width
    gauss = np.exp(-(kx ** 2 + ky ** 2) / (2.0 * filter_width ** 2))
    return np.fft.ifft2(np.fft.fft2(noise) * gauss).real


def make_warp_field(width: int, height: int, warp_max: float, filter_width: float, seed: int) -> WarpField:
    """Random smooth displacement field.

    White noise per component is low-passed with an isotropic Gaussian whose
    standard deviation is ``filter_width`` frequency bins, then each component
    is rescaled so its largest absolute offset equals ``warp_max``.
    """
    if warp_max < 0:
        raise ValueError("warp_max must be >= 0")
    if not filter_width > 0:
        raise ValueError("filter_width must be > 0")
    if warp_max == 0:
        z = np.zeros((height, width))
        return WarpField(z, z.copy())
    rng = np.random.default_rng(seed)
    comps = []
    for _ in range(2):
        f = _smooth_noise(rng, height, width, filter_width)
        peak = np.abs(f).max()
        comps.append(f * (warp_max / peak) if peak > 0 else np.zeros_like(f))
    return WarpField(comps[0], comps[1])


def smoothness_limit(warp_max: float, filter_width: float, width: int, height: int) -> float:
    """Upper bound used for the discrete Laplacian of a generated field.

    Almost all spectral energy sits below four standard deviations of the
    Gaussian filter, where the Laplacian gain is ``(2 pi k / n)^2``.
    """
    k = 4.0 * filter_width
    gain = (2 * np.pi * k) ** 2 * (1.0 / width ** 2 + 1.0 / height ** 2)
    return warp_max * min(gain, 8.0)


def apply_warp(r: Raster, f: WarpField) -> Raster:
    """Backward map: output(x, y) = input(x + u, y + v), reflect at borders."""
    if f.shape != r.shape:
        raise ValueError(f"field {f.shape} does not match raster {r.shape}")
    return r.with_pixels(_warp_pixels(r.pixels, f))


def _warp_pixels(pixels: np.ndarray, f: WarpField) -> np.ndarray:
    h, w = pixels.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return bicubic.sample(pixels, xx + f.u_offsets, yy + f.v_offsets)


def warp_labels(labels: LabelSet, f: WarpField) -> LabelSet:
    """Move box centres by the field; content at q lands near q - offset(q)."""
    if not len(labels):
        return labels
    h, w = f.shape
    arr = labels.as_array()
    xs = arr[:, 1] * w - 0.5
    ys = arr[:, 2] * h - 0.5
    du = bicubic.sample(f.u_offsets, xs, ys)
    dv = bicubic.sample(f.v_offsets, xs, ys)
    moved = [Box(b.class_id, b.cx - du[i] / w, b.cy - dv[i] / h, b.w, b.h)
             for i, b in enumerate(labels)]
    return clip_labels(moved)


# ---------------------------------------------------------------------------
# photometric helpers
# ---------------------------------------------------------------------------

def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """RGB on 0-255 to HSV with every channel in [0, 1]."""
    rgb = rgb / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    safe = np.where(c > 0, c, 1.0)
    h = np.where(v == r, ((g - b) / safe) % 6.0,
                 np.where(v == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    h = np.where(c > 0, h / 6.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    out = np.zeros(hsv.shape)
    for k, (r, g, b) in enumerate(choices):
        m = i == k
        out[..., 0][m], out[..., 1][m], out[..., 2][m] = r[m], g[m], b[m]
    return out * 255.0


def _gauss(rng: np.random.Generator, sd: float, size=None):
    draw = rng.normal(0.0, sd, size) if sd > 0 else (0.0 if size is None else np.zeros(size))
    return np.clip(draw, -255.0, 255.0)


def _hsv_shift(pixels: np.ndarray, channel: int, amount: float) -> np.ndarray:
    hsv = rgb_to_hsv(pixels)
    if channel == 0:
        # hue lives on a 256-step wheel
        hsv[..., 0] = (hsv[..., 0] + amount / 256.0) % 1.0
    else:
        hsv[..., channel] = np.clip(hsv[..., channel] + amount / 255.0, 0.0, 1.0)
    return hsv_to_rgb(hsv)


# ---------------------------------------------------------------------------
# the pipeline
# ---------------------------------------------------------------------------

def _streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(OPS))
    return {op: np.random.default_rng(s) for op, s in zip(OPS, children)}


def augment_pair(p: PatchPair, cfg: AugmentConfig) -> PatchPair:
    """Apply every augmentation in a fixed order.

    Order: mirror, rotate, scale, shear, shift (both patches), alignment shift
    (one patch), local warp, then colour, hue, saturation, value and noise on
    each patch with independent draws. Operations whose sampled magnitude is
    zero are skipped, so the default config returns the input unchanged.
    """
    rng = _streams(cfg.seed)
    h, w = p.patch_a.shape
    px = [p.patch_a.pixels, p.patch_b.pixels]
    labels = [p.labels_a, p.labels_b]
    touched = [False, False]

    flip_ud = rng["mirror"].random() < cfg.mirror_prob_ud
    flip_lr = rng["mirror"].random() < cfg.mirror_prob_lr
    if flip_ud or flip_lr:
        axes = tuple(a for a, on in ((0, flip_ud), (1, flip_lr)) if on)
        px = [np.flip(x, axis=axes) for x in px]
        m = mirror_matrix(w, h, flip_ud, flip_lr)
        labels = [transform_labels(l, m, w, h) for l in labels]

    lo, hi = cfg.rotate
    angle = rng["rotate"].uniform(lo, hi) if hi > lo else lo
    factor = 1.0 + float(_gauss(rng["scale"], cfg.scale_sd))
    factor = max(factor, 0.05)
    shear = float(_gauss(rng["shear"], cfg.shear_sd))
    dx, dy = _gauss(rng["shift"], cfg.shift_sd, 2)
    joint = (shift_matrix(dx, dy) @ shear_matrix(shear, w, h)
             @ scale_matrix(factor, w, h) @ rotation_matrix(angle, w, h))
    if angle != 0 or factor != 1.0 or shear != 0 or dx != 0 or dy != 0:
        px = [warp_affine(x, joint) for x in px]
        labels = [transform_labels(l, joint, w, h) for l in labels]
        touched = [True, True]

    ax, ay = _gauss(rng["align"], cfg.align_shift_sd, 2)
    which = int(rng["align"].integers(2))
    if ax != 0 or ay != 0:
        m = shift_matrix(ax, ay)
        px[which] = warp_affine(px[which], m)
        labels[which] = transform_labels(labels[which], m, w, h)
        touched[which] = True

    field_seeds = rng["warp"].integers(0, 2 ** 63, size=2)
    if cfg.warp_max > 0:
        n_fields = 2 if cfg.warp_independent else 1
        fields_ = [make_warp_field(w, h, cfg.warp_max, cfg.warp_filter_width, int(field_seeds[i]))
                   for i in range(n_fields)]
        for i in range(2):
            f = fields_[i if cfg.warp_independent else 0]
            px[i] = _warp_pixels(px[i], f)
            labels[i] = warp_labels(labels[i], f)
        touched = [True, True]

    for i in range(2):
        shift = _gauss(rng["colour"], cfg.colour_sd, 3)
        if np.any(shift != 0):
            px[i] = px[i] + shift
            touched[i] = True
    for op, channel, sd in (("hue", 0, cfg.hue_sd), ("saturation", 1, cfg.saturation_sd),
                            ("value", 2, cfg.value_sd)):
        for i in range(2):
            amount = float(_gauss(rng[op], sd))
            if amount != 0:
                px[i] = _hsv_shift(np.clip(px[i], 0, 255), channel, amount)
                touched[i] = True
    for i in range(2):
        if cfg.noise_sd > 0:
            px[i] = px[i] + _gauss(rng["noise"], cfg.noise_sd, px[i].shape)
            touched[i] = True

    px = [np.clip(x, 0.0, 255.0) if t else x for x, t in zip(px, touched)]
    return p.replace(
        patch_a=p.patch_a.with_pixels(px[0]),
        patch_b=p.patch_b.with_pixels(px[1]),
        labels_a=labels[0],
        labels_b=labels[1],
    )
