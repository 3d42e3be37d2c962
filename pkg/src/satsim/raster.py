"""Raster and label data model, lossless image I/O and YOLO label text.

Pixels are kept as float64 arrays of shape (height, width, 3) in RGB order on
the 0-255 scale. Quantization to 8 bits only happens in :func:`save_raster`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

LOSSLESS_SUFFIXES = {".png", ".tif", ".tiff", ".bmp"}
# boxes keeping less than this fraction of their area after clipping are dropped
MIN_VISIBLE_FRACTION = 0.25
_EDGE_EPS = 1e-9


class RasterIOError(OSError):
    """Raised when an image or sidecar cannot be read or written."""


class LabelFormatError(ValueError):
    """Raised for malformed label records."""


@dataclass(frozen=True, eq=False)
class Raster:
    """An RGB image with a ground sample distance in metres per pixel."""

    pixels: np.ndarray
    gsd: float = 1.0

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (height, width, 3) pixels, got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("raster must have non-zero area")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixel values must be finite")
        if not (self.gsd > 0 and math.isfinite(self.gsd)):
            raise ValueError(f"gsd must be positive, got {self.gsd}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "gsd", float(self.gsd))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    def with_pixels(self, pixels: np.ndarray, gsd: float | None = None) -> "Raster":
        return Raster(pixels, self.gsd if gsd is None else gsd)

    def crop(self, x0: int, y0: int, width: int, height: int) -> "Raster":
        if x0 < 0 or y0 < 0 or x0 + width > self.width or y0 + height > self.height:
            raise ValueError("crop window outside raster")
        return Raster(self.pixels[y0:y0 + height, x0:x0 + width], self.gsd)

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.pixels), 0, 255).astype(np.uint8)

    @classmethod
    def filled(cls, height: int, width: int, value=0.0, gsd: float = 1.0) -> "Raster":
        return cls(np.full((height, width, 3), value, dtype=np.float64), gsd)


class Box(NamedTuple):
    """One YOLO record: class id and normalized centre/size."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float


@dataclass(frozen=True)
class LabelSet:
    entries: tuple[Box, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(Box(*e) for e in self.entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def as_array(self) -> np.ndarray:
        """(n, 5) float array of class, cx, cy, w, h."""
        if not self.entries:
            return np.zeros((0, 5))
        return np.array(self.entries, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class PatchPair:
    patch_a: Raster
    patch_b: Raster
    labels_a: LabelSet
    labels_b: LabelSet
    geo_id: tuple[int, int] = (0, 0)
    survey_a: str = "a"
    survey_b: str = "b"
    allow_self_pair: bool = field(default=False, repr=False)

    def __post_init__(self):
        if self.patch_a.shape != self.patch_b.shape:
            raise ValueError("patches in a pair must have identical dimensions")
        if not math.isclose(self.patch_a.gsd, self.patch_b.gsd, rel_tol=1e-12):
            raise ValueError("patches in a pair must have identical gsd")
        if self.survey_a == self.survey_b and not self.allow_self_pair:
            raise ValueError(f"self pair {self.survey_a!r} not permitted")

    def replace(self, **changes) -> "PatchPair":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# image files
# ---------------------------------------------------------------------------

def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def read_sidecar(path) -> dict | None:
    """Return the JSON sidecar next to ``path`` or None when absent."""
    side = sidecar_path(path)
    if not side.exists():
        return None
    try:
        meta = json.loads(side.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise RasterIOError(f"bad sidecar {side}: {exc}") from exc
    if not isinstance(meta, dict):
        raise RasterIOError(f"bad sidecar {side}: expected an object")
    return meta


def write_sidecar(path, gsd: float, origin: Sequence[float] = (0.0, 0.0)) -> Path:
    side = sidecar_path(path)
    meta = {"gsd_m_per_px": float(gsd), "origin": [float(origin[0]), float(origin[1])]}
    try:
        side.write_text(json.dumps(meta) + "\n")
    except OSError as exc:
        raise RasterIOError(f"cannot write {side}: {exc}") from exc
    return side


def load_raster(path, default_gsd: float | None = None) -> Raster:
    """Read a lossless RGB image.

    The gsd comes from the JSON sidecar (``<stem>.json``) when present,
    otherwise from ``default_gsd``. Grey or RGBA files are converted to RGB.
    """
    path = Path(path)
    if path.suffix.lower() not in LOSSLESS_SUFFIXES:
        raise RasterIOError(f"unsupported format {path.suffix!r} for {path}")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode != "RGB":
                im = im.convert("RGB")
            pixels = np.asarray(im, dtype=np.float64)
    except FileNotFoundError as exc:
        raise RasterIOError(f"cannot read {path}: file not found") from exc
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise RasterIOError(f"decode failure for {path}: {exc}") from exc
    if pixels.ndim != 3 or pixels.shape[0] == 0 or pixels.shape[1] == 0:
        raise RasterIOError(f"zero-area image {path}")

    meta = read_sidecar(path)
    gsd = None if meta is None else meta.get("gsd_m_per_px")
    if gsd is None:
        gsd = default_gsd if default_gsd is not None else 1.0
    return Raster(pixels, float(gsd))


def load_origin(path) -> tuple[float, float]:
    meta = read_sidecar(path)
    if meta is None or "origin" not in meta:
        return (0.0, 0.0)
    e, n = meta["origin"]
    return (float(e), float(n))


def save_raster(r: Raster, path, origin: Sequence[float] | None = None) -> None:
    """Write ``r`` losslessly, clamping and rounding to 8 bits, plus a sidecar."""
    path = Path(path)
    if path.suffix.lower() not in LOSSLESS_SUFFIXES:
        raise RasterIOError(f"unsupported format {path.suffix!r} for {path}")
    try:
        Image.fromarray(r.to_uint8(), mode="RGB").save(path)
    except OSError as exc:
        raise RasterIOError(f"cannot write {path}: {exc}") from exc
    write_sidecar(path, r.gsd, origin if origin is not None else (0.0, 0.0))


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------

def _validate_box(b: Box, lineno: int | None = None) -> None:
    where = "" if lineno is None else f" (line {lineno})"
    if b.class_id < 0:
        raise LabelFormatError(f"negative class id{where}")
    if not (0.0 <= b.cx <= 1.0 and 0.0 <= b.cy <= 1.0):
        raise LabelFormatError(f"coordinate out of range{where}")
    if not (0.0 < b.w <= 1.0 and 0.0 < b.h <= 1.0):
        raise LabelFormatError(f"coordinate out of range{where}: size must be in (0, 1]")


def parse_labels(text: str) -> LabelSet:
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise LabelFormatError(f"wrong field count {len(fields)} (line {lineno})")
        try:
            class_id = int(fields[0])
            cx, cy, w, h = (float(f) for f in fields[1:])
        except ValueError as exc:
            raise LabelFormatError(f"non-numeric field (line {lineno}): {line!r}") from exc
        if not all(math.isfinite(v) for v in (cx, cy, w, h)):
            raise LabelFormatError(f"non-numeric field (line {lineno}): {line!r}")
        box = Box(class_id, cx, cy, w, h)
        _validate_box(box, lineno)
        entries.append(box)
    return LabelSet(tuple(entries))


def serialize_labels(labels: LabelSet) -> str:
    return "".join(
        f"{b.class_id:d} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}\n" for b in labels
    )


def read_labels(path) -> LabelSet:
    try:
        return parse_labels(Path(path).read_text())
    except OSError as exc:
        raise RasterIOError(f"cannot read labels {path}: {exc}") from exc


def write_labels(labels: LabelSet, path) -> None:
    try:
        Path(path).write_text(serialize_labels(labels))
    except OSError as exc:
        raise RasterIOError(f"cannot write labels {path}: {exc}") from exc


def _clip_axis(c: float, size: float) -> tuple[float, float]:
    lo, hi = c - size / 2, c + size / 2
    if lo >= -_EDGE_EPS and hi <= 1 + _EDGE_EPS:
        return c, size  # untouched axes keep their exact values
    lo, hi = max(lo, 0.0), min(hi, 1.0)
    return (lo + hi) / 2, hi - lo


def clip_box(b: Box) -> Box | None:
    """Intersect one box with the unit square; None if too little survives."""
    cx, w = _clip_axis(b.cx, b.w)
    cy, h = _clip_axis(b.cy, b.h)
    if w <= 0 or h <= 0:
        return None
    if (cx, w, cy, h) == (b.cx, b.w, b.cy, b.h):
        return b
    if w * h < MIN_VISIBLE_FRACTION * b.w * b.h * (1 - 1e-9):
        return None
    return Box(b.class_id, cx, cy, w, h)


def clip_labels(labels: LabelSet | Iterable[Box]) -> LabelSet:
    kept = (clip_box(Box(*b)) for b in labels)
    return LabelSet(tuple(b for b in kept if b is not None))
