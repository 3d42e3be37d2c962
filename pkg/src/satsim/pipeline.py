"""End-to-end dataset construction: crop, align, tile, degrade, pair, augment."""

from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .augment import AugmentConfig, augment_pair, transform_labels
from .calibration import SweepConfig, calibrate_q
from .optics import DegradeConfig, degrade
from .raster import (LabelSet, PatchPair, load_origin, load_raster, read_labels,
                     save_raster, write_labels)
from .registration import (DEFAULT_TILE, DEFAULT_WINDOW, GeoImage, SimilarityTransform, Tile,
                           apply_transform, crop_common_extent, estimate_similarity, geo_id_str,
                           labels_for_window, tile_aligned_set, tile_labels)

log = logging.getLogger(__name__)

DEFAULT_Q = 4.34
# corrections below these are not worth a resample (which also blackens borders)
SNAP_SHIFT_PX = 0.05
SNAP_THETA_DEG = 0.01
SNAP_SCALE = 1e-4


class PipelineError(RuntimeError):
    """Domain failure that should stop a build (exit code 3 on the CLI)."""


@dataclass
class PipelineConfig:
    surveys: list[str] = field(default_factory=list)
    out: str = "out"
    source_gsd: float | None = None
    target_gsd: float = 0.5
    q: float | str = DEFAULT_Q
    reference: str | None = None
    tile: int = DEFAULT_TILE
    window: int = DEFAULT_WINDOW
    aug: AugmentConfig | None = None
    exclusions: list[tuple[int, int]] = field(default_factory=list)
    align: bool = True
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.aug, dict):
            self.aug = AugmentConfig.from_dict(self.aug)
        elif isinstance(self.aug, (str, Path)):
            self.aug = AugmentConfig.load(self.aug)
        self.exclusions = [parse_geo_id(e) for e in self.exclusions]
        if isinstance(self.q, str) and self.q != "calibrate":
            self.q = float(self.q)
        if not isinstance(self.q, str) and not self.q > 0:
            raise ValueError("q must be positive or 'calibrate'")
        if self.source_gsd is not None and self.target_gsd < self.source_gsd:
            raise ValueError("target_gsd must be >= source_gsd")
        if self.tile < 1 or self.window < 16:
            raise ValueError("tile must be >= 1 and window >= 16")

    @classmethod
    def from_file(cls, path, **overrides) -> "PipelineConfig":
        d = json.loads(Path(path).read_text())
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**d)


def parse_geo_id(value) -> tuple[int, int]:
    if isinstance(value, str):
        row, col = value.strip().split("_")
        return int(row), int(col)
    row, col = value
    return int(row), int(col)


def read_exclusions(path) -> list[tuple[int, int]]:
    lines = Path(path).read_text().splitlines()
    return [parse_geo_id(line) for line in lines if line.strip() and not line.startswith("#")]


def load_survey(path, default_gsd: float | None = None) -> tuple[GeoImage, LabelSet]:
    path = Path(path)
    r = load_raster(path, default_gsd=default_gsd)
    label_path = path.with_suffix(".txt")
    labels = read_labels(label_path) if label_path.exists() else LabelSet()
    return GeoImage(r, load_origin(path), path.stem), labels


def align_set(images: Sequence[GeoImage], labels: dict[str, LabelSet], window: int):
    """Align every image onto the first one; returns images, labels, transforms."""
    fixed = images[0]
    out = [fixed]
    transforms = {fixed.survey_id: SimilarityTransform()}
    new_labels = dict(labels)
    for g in images[1:]:
        t = estimate_similarity(fixed, g, window=window)
        transforms[g.survey_id] = t
        snapped = (abs(t.dx) < SNAP_SHIFT_PX and abs(t.dy) < SNAP_SHIFT_PX
                   and abs(t.theta) < SNAP_THETA_DEG and abs(t.scale - 1) < SNAP_SCALE)
        if snapped:
            out.append(g)
            continue
        inv = t.inverse()
        out.append(apply_transform(g, inv))
        h, w = g.raster.shape
        new_labels[g.survey_id] = transform_labels(labels.get(g.survey_id, LabelSet()),
                                                   inv.as_affine(w, h), w, h)
    return out, new_labels, transforms


def _crop_labels(labels: LabelSet, before: GeoImage, after: GeoImage) -> LabelSet:
    gsd = before.raster.gsd
    x0 = int(round((after.origin[0] - before.origin[0]) / gsd))
    y0 = int(round((before.origin[1] - after.origin[1]) / gsd))
    return labels_for_window(labels, before.raster.shape, x0, y0, after.raster.width, after.raster.height)


def _pair_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def build_dataset(cfg: PipelineConfig) -> dict:
    """Run the whole build and return the report written to ``report.json``."""
    if len(cfg.surveys) < 2:
        raise ValueError("build needs at least two surveys")
    root = Path(cfg.out)
    loaded = [load_survey(p, cfg.source_gsd) for p in cfg.surveys]
    images = [g for g, _ in loaded]
    labels = {g.survey_id: l for g, l in loaded}
    if len(labels) != len(images):
        raise ValueError("survey file stems must be unique")
    if cfg.source_gsd is not None:
        images = [GeoImage(g.raster.with_pixels(g.raster.pixels, cfg.source_gsd), g.origin, g.survey_id)
                  for g in images]
    source_gsd = images[0].raster.gsd
    if cfg.target_gsd < source_gsd:
        raise ValueError("target_gsd must be >= source gsd")

    cropped = crop_common_extent(images)  # NoOverlapError propagates
    labels = {g.survey_id: _crop_labels(labels[g.survey_id], g, c) for g, c in zip(images, cropped)}
    images = cropped
    transforms = {}
    if cfg.align:
        images, labels, transforms = align_set(images, labels, cfg.window)

    root.mkdir(parents=True, exist_ok=True)
    calibration = None
    if cfg.q == "calibrate":
        if cfg.reference is None:
            raise ValueError("q='calibrate' needs a reference image")
        reference = load_raster(cfg.reference, default_gsd=cfg.target_gsd)
        result = calibrate_q([g.raster for g in images], reference, cfg.target_gsd / source_gsd,
                             SweepConfig(workers=cfg.workers), [g.survey_id for g in images])
        result.write(root / "calibration.json")
        calibration = result.q_star
        q = result.q_star
    else:
        q = float(cfg.q)
    deg_cfg = DegradeConfig.from_gsd(q, source_gsd, cfg.target_gsd)

    tiles = tile_aligned_set(images, cfg.tile, require_valid=True, exclude=cfg.exclusions)
    if not tiles:
        raise PipelineError("no complete tiles in the aligned extent")

    west, north = images[0].origin

    def work(tile: Tile):
        name = tile.name
        origin = (west + tile.x0 * source_gsd, north - tile.y0 * source_gsd)
        try:
            written = {}
            for sid, patch in sorted(tile.patches.items()):
                local = tile_labels(tile, labels.get(sid, LabelSet()))
                hi_dir, sim_dir = root / "hires" / name, root / "sim" / name
                hi_dir.mkdir(parents=True, exist_ok=True)
                sim_dir.mkdir(parents=True, exist_ok=True)
                save_raster(patch, hi_dir / f"{sid}.png", origin)
                write_labels(local, hi_dir / f"{sid}.txt")
                sim = degrade(patch, deg_cfg)
                save_raster(sim, sim_dir / f"{sid}.png", origin)
                write_labels(local, sim_dir / f"{sid}.txt")
                written[sid] = (sim, local)
            return tile, written, None
        except Exception as exc:  # per-tile failures are logged and skipped
            log.warning("tile %s failed: %s", name, exc)
            return tile, None, str(exc)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(work, tiles))
    else:
        results = [work(t) for t in tiles]
    results.sort(key=lambda r: r[0].geo_id)

    failed = [r[0].name for r in results if r[1] is None]
    good = [r for r in results if r[1] is not None]
    if not good:
        raise PipelineError("all tiles failed")

    records = []
    for tile, written, _ in good:
        name = tile.name
        for a, b in itertools.combinations(sorted(written), 2):
            rec = {
                "geo_id": name,
                "survey_a": a,
                "survey_b": b,
                "image_a": f"hires/{name}/{a}.png",
                "image_b": f"hires/{name}/{b}.png",
                "labels_a": f"hires/{name}/{a}.txt",
                "labels_b": f"hires/{name}/{b}.txt",
                "sim_image_a": f"sim/{name}/{a}.png",
                "sim_image_b": f"sim/{name}/{b}.png",
            }
            if cfg.aug is not None:
                rec.update(_augment_record(root, cfg.aug, len(records), tile, a, b, written))
            records.append(rec)

    with open(root / "pairs.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    n = len(images)
    report = {
        "flights": n,
        "surveys": [g.survey_id for g in images],
        "geo_ids": len(good),
        "patches": len(good) * n,
        "pairs": len(records),
        "excluded": [geo_id_str(e) for e in cfg.exclusions],
        "failed": failed,
        "q": q,
        "calibrated": calibration is not None,
        "phi": deg_cfg.phi,
        "source_gsd": source_gsd,
        "target_gsd": cfg.target_gsd,
        "tile": cfg.tile,
        "transforms": {k: [t.dx, t.dy, t.theta, t.scale] for k, t in sorted(transforms.items())},
    }
    (root / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def _augment_record(root: Path, aug: AugmentConfig, index: int, tile: Tile, a: str, b: str, written) -> dict:
    pair = PatchPair(written[a][0], written[b][0], written[a][1], written[b][1], tile.geo_id, a, b)
    cfg = AugmentConfig.from_dict({**aug.to_dict(), "seed": _pair_seed(aug.seed, index)})
    out = augment_pair(pair, cfg)
    d = root / "aug" / tile.name / f"{a}__{b}"
    d.mkdir(parents=True, exist_ok=True)
    save_raster(out.patch_a, d / "a.png")
    save_raster(out.patch_b, d / "b.png")
    write_labels(out.labels_a, d / "a.txt")
    write_labels(out.labels_b, d / "b.txt")
    rel = f"aug/{tile.name}/{a}__{b}"
    return {"aug_image_a": f"{rel}/a.png", "aug_image_b": f"{rel}/b.png",
            "aug_labels_a": f"{rel}/a.txt", "aug_labels_b": f"{rel}/b.txt"}

