"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 I/O failure, 3 domain failure
(no overlap, calibration target not bracketed, all tiles failed, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .augment import AugmentConfig, augment_pair
from .blur import laplacian_variance
from .calibration import CalibrationError, SweepConfig, calibrate_q
from .optics import DegradeConfig, degrade
from .pipeline import PipelineConfig, PipelineError, build_dataset, read_exclusions
from .raster import (LabelSet, LabelFormatError, PatchPair, RasterIOError, load_origin,
                     load_raster, read_labels, save_raster, write_labels)
from .registration import (DEFAULT_WINDOW, FeaturelessWindow, GeoImage, NoOverlapError,
                           apply_transform, estimate_similarity)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DOMAIN = 0, 1, 2, 3
log = logging.getLogger("satsim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(args) -> dict:
    if getattr(args, "config", None) is None:
        return {}
    try:
        cfg = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise RasterIOError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"bad config {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _pick(args, cfg: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


def cmd_lv(args) -> int:
    report = laplacian_variance(load_raster(args.image))
    print(f"lv={report.lv:.4f}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    surveys = args.surveys or cfg.get("surveys") or []
    reference = _pick(args, cfg, "reference")
    if not surveys:
        raise UsageError("calibrate needs at least one survey image")
    if reference is None:
        raise UsageError("calibrate needs --reference")
    target_gsd = _pick(args, cfg, "target_gsd", 0.5)
    source_gsd = _pick(args, cfg, "source_gsd")
    rasters = [load_raster(p, default_gsd=source_gsd) for p in surveys]
    if source_gsd is not None:
        rasters = [r.with_pixels(r.pixels, source_gsd) for r in rasters]
    ref = load_raster(reference, default_gsd=target_gsd)
    sweep = SweepConfig(
        q_min=_pick(args, cfg, "q_min", 0.25),
        q_max=_pick(args, cfg, "q_max", 8.0),
        q_step=_pick(args, cfg, "q_step", 0.25),
    )
    phis = {round(target_gsd / r.gsd, 12) for r in rasters}
    if len(phis) != 1:
        raise UsageError("all surveys must share one gsd")
    result = calibrate_q(rasters, ref, phis.pop(), sweep, [Path(p).stem for p in surveys])
    out = _pick(args, cfg, "out", "calibration.json")
    result.write(out)
    print(f"q_star={result.q_star:.4f}")
    return EXIT_OK


def cmd_degrade(args) -> int:
    cfg = _load_config(args)
    source_gsd = _pick(args, cfg, "source_gsd")
    r = load_raster(args.image, default_gsd=source_gsd)
    if source_gsd is not None:
        r = r.with_pixels(r.pixels, source_gsd)
    q = float(_pick(args, cfg, "q", 4.34))
    target = float(_pick(args, cfg, "target_gsd", 0.5))
    out = degrade(r, DegradeConfig.from_gsd(q, r.gsd, target))
    save_raster(out, args.output, origin=load_origin(args.image))
    labels = Path(args.image).with_suffix(".txt")
    if labels.exists():
        write_labels(read_labels(labels), Path(args.output).with_suffix(".txt"))
    print(f"{out.width}x{out.height} gsd={out.gsd:g}")
    return EXIT_OK


def cmd_align(args) -> int:
    cfg = _load_config(args)
    fixed = load_raster(args.fixed)
    moving = load_raster(args.moving)
    t = estimate_similarity(fixed, moving, window=int(_pick(args, cfg, "window", DEFAULT_WINDOW)))
    print(json.dumps({"dx": t.dx, "dy": t.dy, "theta": t.theta, "scale": t.scale}))
    if args.output:
        aligned = apply_transform(GeoImage(moving, load_origin(args.moving)), t.inverse())
        save_raster(aligned.raster, args.output, origin=aligned.origin)
    return EXIT_OK


def cmd_build(args) -> int:
    cfg = _load_config(args)
    overrides = {
        "surveys": args.surveys or None,
        "out": args.out,
        "source_gsd": args.source_gsd,
        "target_gsd": args.target_gsd,
        "q": args.q,
        "reference": args.reference,
        "tile": args.tile,
        "window": args.window,
        "aug": args.aug_config,
        "workers": args.workers,
    }
    merged = {**cfg, **{k: v for k, v in overrides.items() if v is not None}}
    if args.no_align:
        merged["align"] = False
    if args.exclusions:
        merged["exclusions"] = read_exclusions(args.exclusions)
    if len(merged.get("surveys") or []) < 2:
        raise UsageError("build needs at least two surveys")
    try:
        pipeline_cfg = PipelineConfig(**merged)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc
    report = build_dataset(pipeline_cfg)
    print(f"geo_ids={report['geo_ids']} pairs={report['pairs']} q={report['q']:.4f}")
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = AugmentConfig.load(args.aug_config)
    if args.seed is not None:
        cfg = AugmentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    a, b = load_raster(args.image_a), load_raster(args.image_b)
    la = read_labels(args.labels_a) if args.labels_a else LabelSet()
    lb = read_labels(args.labels_b) if args.labels_b else LabelSet()
    pair = PatchPair(a, b, la, lb, survey_a=Path(args.image_a).stem, survey_b=Path(args.image_b).stem,
                     allow_self_pair=True)
    out = augment_pair(pair, cfg)
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    save_raster(out.patch_a, root / "a.png")
    save_raster(out.patch_b, root / "b.png")
    write_labels(out.labels_a, root / "a.txt")
    write_labels(out.labels_b, root / "b.txt")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="satsim", description="Simulate satellite imagery from aerial surveys.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("lv", help="print the Laplacian variance of an image")
    s.add_argument("image")
    s.set_defaults(func=cmd_lv)

    s = sub.add_parser("calibrate", help="tune Q against a reference satellite image")
    s.add_argument("surveys", nargs="*")
    s.add_argument("--reference")
    s.add_argument("--source-gsd", type=float)
    s.add_argument("--target-gsd", type=float)
    s.add_argument("--q-min", type=float)
    s.add_argument("--q-max", type=float)
    s.add_argument("--q-step", type=float)
    s.add_argument("--out")
    s.add_argument("--config")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("degrade", help="blur and downsample one image")
    s.add_argument("image")
    s.add_argument("output")
    s.add_argument("--q", type=float)
    s.add_argument("--source-gsd", type=float)
    s.add_argument("--target-gsd", type=float)
    s.add_argument("--config")
    s.set_defaults(func=cmd_degrade)

    s = sub.add_parser("align", help="estimate the similarity transform between two images")
    s.add_argument("fixed")
    s.add_argument("moving")
    s.add_argument("output", nargs="?")
    s.add_argument("--window", type=int)
    s.add_argument("--config")
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("build", help="build the paired dataset tree")
    s.add_argument("surveys", nargs="*")
    s.add_argument("--out")
    s.add_argument("--source-gsd", type=float)
    s.add_argument("--target-gsd", type=float)
    s.add_argument("--q", help="Q value or 'calibrate'")
    s.add_argument("--reference")
    s.add_argument("--tile", type=int)
    s.add_argument("--window", type=int)
    s.add_argument("--aug-config")
    s.add_argument("--exclusions", help="text file with one row_col geo id per line")
    s.add_argument("--no-align", action="store_true")
    s.add_argument("--workers", type=int)
    s.add_argument("--config")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("augment", help="augment one image pair")
    s.add_argument("image_a")
    s.add_argument("image_b")
    s.add_argument("--labels-a")
    s.add_argument("--labels-b")
    s.add_argument("--aug-config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"satsim: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RasterIOError, FileNotFoundError, LabelFormatError) as exc:
        print(f"satsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NoOverlapError, CalibrationError, FeaturelessWindow, PipelineError) as exc:
        print(f"satsim: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"satsim: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"satsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
