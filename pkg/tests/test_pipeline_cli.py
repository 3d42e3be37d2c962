import json
import math

import numpy as np
import pytest

from satsim import cli, pipeline
from satsim.optics import DegradeConfig, degrade
from satsim.raster import Box, LabelSet, Raster, load_raster, read_labels, save_raster, write_labels
from satsim.samples import sample_photo, textured_image

OFFSETS = [(0, 0), (30, 20), (50, 45)]


@pytest.fixture(scope="module")
def surveys(tmp_path_factory):
    """Three overlapping 600x600 surveys of one scene at 0.05 m/px."""
    root = tmp_path_factory.mktemp("surveys")
    big = textured_image(700, seed=3).pixels
    rng = np.random.default_rng(0)
    paths = []
    for i, (ox, oy) in enumerate(OFFSETS):
        px = big[oy:oy + 600, ox:ox + 600] + rng.normal(0, 2, (600, 600, 3))
        path = root / f"A{i + 1}.png"
        save_raster(Raster(np.clip(px, 0, 255), 0.05), path, origin=(ox * 0.05, -oy * 0.05))
        # one animal centred on scene pixel (400, 420)
        write_labels(LabelSet([Box(0, (400.5 - ox) / 600, (420.5 - oy) / 600, 0.02, 0.02)]),
                     path.with_suffix(".txt"))
        paths.append(str(path))
    return paths


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return code, out


@pytest.fixture(scope="module")
def built(surveys, tmp_path_factory):
    out = tmp_path_factory.mktemp("build") / "ds"
    code = cli.main(["build", *surveys, "--out", str(out), "--tile", "250", "--window", "256"])
    assert code == 0
    return out


def test_build_counts(built):
    report = json.loads((built / "report.json").read_text())
    assert report["flights"] == 3
    assert report["geo_ids"] == 4
    assert report["pairs"] == 12 == report["geo_ids"] * math.comb(3, 2)
    assert report["patches"] == 12
    assert report["phi"] == pytest.approx(10.0)
    lines = (built / "pairs.jsonl").read_text().splitlines()
    assert len(lines) == 12
    first = json.loads(lines[0])
    assert (first["geo_id"], first["survey_a"], first["survey_b"]) == ("0_0", "A1", "A2")
    for rec in map(json.loads, lines):
        for key in ("image_a", "image_b", "labels_a", "labels_b", "sim_image_a", "sim_image_b"):
            assert (built / rec[key]).exists()


def test_build_sim_geometry(built):
    for gid in ("0_0", "0_1", "1_0", "1_1"):
        for sid in ("A1", "A2", "A3"):
            hi = load_raster(built / "hires" / gid / f"{sid}.png")
            sim = load_raster(built / "sim" / gid / f"{sid}.png")
            assert hi.shape == (250, 250) and hi.gsd == pytest.approx(0.05)
            assert sim.shape == (25, 25) and sim.gsd == pytest.approx(0.5)
            assert read_labels(built / "sim" / gid / f"{sid}.txt") == read_labels(built / "hires" / gid / f"{sid}.txt")


def test_build_labels_follow_ground(built):
    # the common extent starts at scene (50, 45), so the animal lands at (350, 375)
    # which is (100, 125) inside tile 1_1
    for sid in ("A1", "A2", "A3"):
        (box,) = read_labels(built / "hires" / "1_1" / f"{sid}.txt")
        assert box.cx == pytest.approx(100.5 / 250, abs=0.002)
        assert box.cy == pytest.approx(125.5 / 250, abs=0.002)
        assert box.w == pytest.approx(12 / 250, abs=0.002)
        assert len(read_labels(built / "hires" / "0_0" / f"{sid}.txt")) == 0


def test_build_is_deterministic(surveys, built, tmp_path):
    out = tmp_path / "again"
    assert cli.main(["build", *surveys, "--out", str(out), "--tile", "250", "--window", "256"]) == 0
    for name in ("pairs.jsonl", "report.json"):
        assert (out / name).read_bytes() == (built / name).read_bytes()
    assert (out / "sim/1_0/A2.png").read_bytes() == (built / "sim/1_0/A2.png").read_bytes()


def test_build_with_aug_and_exclusions(surveys, tmp_path):
    aug = tmp_path / "aug.json"
    aug.write_text(json.dumps({"mirror_prob_lr": 0.5, "rotate": [-5, 5], "noise_sd": 2, "seed": 4}))
    excl = tmp_path / "skip.txt"
    excl.write_text("# manual rejects\n0_1\n")
    out = tmp_path / "ds"
    code = cli.main(["build", *surveys, "--out", str(out), "--tile", "250", "--window", "256",
                     "--aug-config", str(aug), "--exclusions", str(excl)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["pairs"] == 9 and report["excluded"] == ["0_1"]
    recs = [json.loads(l) for l in (out / "pairs.jsonl").read_text().splitlines()]
    assert all((out / r["aug_image_a"]).exists() and (out / r["aug_labels_b"]).exists() for r in recs)
    assert not (out / "hires" / "0_1").exists()


def test_build_from_config_file(surveys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"surveys": surveys[:2], "tile": 250, "window": 256, "q": 2.0,
                               "out": str(tmp_path / "ds")}))
    assert cli.main(["build", "--config", str(cfg)]) == 0
    report = json.loads((tmp_path / "ds" / "report.json").read_text())
    assert report["pairs"] == 4 and report["q"] == 2.0


def test_build_zero_overlap_exit_3(tmp_path):
    paths = []
    for i, east in enumerate((0.0, 100.0)):
        p = tmp_path / f"s{i}.png"
        save_raster(textured_image(64, seed=i), p, origin=(east, 0.0))
        paths.append(p)
    assert run(["build", *paths, "--out", tmp_path / "out"])[0] == 3


def test_build_all_tiles_fail_exit_3(surveys, tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeError("disk on fire")
    monkeypatch.setattr(pipeline, "degrade", broken)
    assert cli.main(["build", *surveys, "--out", str(tmp_path / "x"), "--tile", "250",
                     "--window", "256", "--no-align"]) == 3


def test_build_usage_and_io_errors(surveys, tmp_path):
    assert run(["build", surveys[0], "--out", tmp_path / "o"])[0] == 1
    assert run(["build", surveys[0], tmp_path / "missing.png", "--out", tmp_path / "o"])[0] == 2
    assert run(["build", *surveys, "--tile", "abc"])[0] == 1
    assert run(["frobnicate"])[0] == 1


def test_pipeline_config_validation():
    with pytest.raises(ValueError):
        pipeline.PipelineConfig(source_gsd=0.5, target_gsd=0.05)
    with pytest.raises(ValueError):
        pipeline.PipelineConfig(q=-1.0)
    assert pipeline.PipelineConfig(q="3.5").q == 3.5
    cfg = pipeline.PipelineConfig()
    assert (cfg.target_gsd, cfg.tile, cfg.window, cfg.q) == (0.5, 5000, 2000, 4.34)


def test_lv_command(tmp_path, capsys):
    p = tmp_path / "flat.png"
    save_raster(Raster.filled(16, 16, 128.0), p)
    code, out = run(["lv", p], capsys)
    assert code == 0 and out.out.strip() == "lv=0.0000"
    code, out = run(["lv", tmp_path / "nope.png"], capsys)
    assert code == 2 and "nope.png" in out.err


@pytest.fixture(scope="module")
def calib_inputs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cal")
    photo = sample_photo()
    save_raster(photo, root / "uav.png")
    save_raster(degrade(photo, DegradeConfig.from_gsd(2.0, 0.05, 0.5)), root / "ref.png")
    return root


def test_calibrate_command_self_consistency(calib_inputs, capsys):
    report = calib_inputs / "cal.json"
    code, out = run(["calibrate", calib_inputs / "uav.png", "--reference", calib_inputs / "ref.png",
                     "--out", report], capsys)
    assert code == 0
    doc = json.loads(report.read_text())
    assert 1.95 <= doc["q_star"] <= 2.05
    assert out.out.strip() == f"q_star={doc['q_star']:.4f}"


def test_calibrate_command_errors(calib_inputs, tmp_path):
    assert run(["calibrate", "--reference", calib_inputs / "ref.png"])[0] == 1
    flat = tmp_path / "flat.png"
    save_raster(Raster.filled(51, 51, 90.0, gsd=0.5), flat)
    assert run(["calibrate", calib_inputs / "uav.png", "--reference", flat, "--out", tmp_path / "c.json"])[0] == 3


def test_degrade_command(calib_inputs, tmp_path, capsys):
    out = tmp_path / "sim.png"
    code, printed = run(["degrade", calib_inputs / "uav.png", out, "--q", "4.34"], capsys)
    assert code == 0 and printed.out.strip() == "51x51 gsd=0.5"
    sim = load_raster(out)
    assert sim.shape == (51, 51) and sim.gsd == pytest.approx(0.5)


def test_align_and_augment_commands(surveys, tmp_path, capsys):
    code, printed = run(["align", surveys[0], surveys[0], tmp_path / "al.png", "--window", "256"], capsys)
    assert code == 0
    t = json.loads(printed.out)
    assert abs(t["dx"]) < 0.1 and abs(t["theta"]) < 0.05
    assert (tmp_path / "al.png").exists()

    aug = tmp_path / "aug.json"
    aug.write_text(json.dumps({"mirror_prob_lr": 1.0}))
    code, _ = run(["augment", surveys[0], surveys[1], "--labels-a", surveys[0].replace(".png", ".txt"),
                   "--aug-config", aug, "--out", tmp_path / "augout"], capsys)
    assert code == 0
    (box,) = read_labels(tmp_path / "augout" / "a.txt")
    assert box.cx == pytest.approx(1 - 400.5 / 600, abs=1e-6)
    assert len(read_labels(tmp_path / "augout" / "b.txt")) == 0
