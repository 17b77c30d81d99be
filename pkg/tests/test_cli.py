import csv
import json

import numpy as np
import pytest

from jgm import forward
from jgm.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, TIMING_KEY, main, read_config_file
from jgm.io import read_png, write_png

TINY = ["--count", "12", "--height", "8", "--width", "8", "--n-iter", "10", "--net-width", "4",
        "--net-depth", "2", "--batch-size", "4", "--n-levels", "3", "--sigma-min", "0.1"]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ckpt = root / "model.ckpt"
    assert main(["train", "--output", str(ckpt), "--export-holdout", str(root / "held"),
                 "--holdout", "3", *TINY]) == EXIT_OK
    return root, ckpt


def _colorize(root, ckpt, out, *extra):
    return main(["colorize", "--checkpoint", str(ckpt), "--input", str(root / "held" / "gray"),
                 "--output", str(out), "--n-steps", "3", *extra])


def test_train_writes_checkpoint_and_manifest(trained):
    root, ckpt = trained
    manifest = json.loads(ckpt.with_suffix(".json").read_text())
    assert manifest["command"] == "train"
    assert manifest["config"]["n_iter"] == 10
    assert len(list((root / "held" / "color").glob("*.png"))) == 3
    gray = read_png(root / "held" / "gray" / "img0000.png")
    assert gray.ndim == 2


def test_colorize_is_byte_identical(trained, tmp_path):
    root, ckpt = trained
    assert _colorize(root, ckpt, tmp_path / "a", "--seed", "4") == EXIT_OK
    assert _colorize(root, ckpt, tmp_path / "b", "--seed", "4") == EXIT_OK
    for name in ["img0000", "img0001", "img0002"]:
        assert (tmp_path / "a" / f"{name}.png").read_bytes() == (tmp_path / "b" / f"{name}.png").read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    ma.pop(TIMING_KEY), mb.pop(TIMING_KEY)
    for m in (ma, mb):
        m["config"].pop("output"), m["runs"]["average"].pop("outputs"), m["runs"]["average"].pop("output_sha256")
    assert ma == mb
    assert len(ma["runs"]["average"]["residuals"]) == 3


def test_manifest_reproduces_run(trained, tmp_path):
    root, ckpt = trained
    assert _colorize(root, ckpt, tmp_path / "a", "--seed", "9", "--dc-weight", "2.5") == EXIT_OK
    cfg = json.loads((tmp_path / "a" / "manifest.json").read_text())["config"]
    lines = [f"{k}={v}" for k, v in cfg.items()
             if k not in ("command", "config", "output") and v is not None]
    (tmp_path / "run.cfg").write_text("\n".join(lines) + "\n")
    assert main(["colorize", "--config", str(tmp_path / "run.cfg"), "--output", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "img0001.png").read_bytes() == (tmp_path / "b" / "img0001.png").read_bytes()


def test_flags_override_config_file(trained, tmp_path):
    root, ckpt = trained
    (tmp_path / "c.cfg").write_text("# comment\nn_steps = 3\nseed=1\ndc-weight=7\n")
    assert _colorize(root, ckpt, tmp_path / "o", "--config", str(tmp_path / "c.cfg"), "--seed", "2") == EXIT_OK
    cfg = json.loads((tmp_path / "o" / "manifest.json").read_text())["sampler"]
    assert cfg["seed"] == 2 and cfg["dc_weight"] == 7.0


def test_config_file_parsing(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("a_b = 1\n\n# x\nc=d=e\n")
    assert read_config_file(path) == [("a-b", "1"), ("c", "d=e")]
    path.write_text("novalue\n")
    assert main(["oracle-check", "--config", str(path)]) == EXIT_USAGE


def test_snapshots_tensors_and_reference(trained, tmp_path):
    root, ckpt = trained
    gray = root / "held" / "gray" / "img0000.png"
    out = tmp_path / "one.png"
    code = main(["colorize", "--checkpoint", str(ckpt), "--input", str(gray), "--output", str(out),
                 "--n-steps", "2", "--snapshot-every", "1", "--save-tensors", "on",
                 "--reference", str(root / "held" / "color" / "img0000.png")])
    assert code == EXIT_OK
    assert sorted(p.name for p in tmp_path.glob("one_level*.png")) == [
        "one_level01.png", "one_level02.png", "one_level03.png"]
    assert (tmp_path / "one.jgt").stat().st_size == 23 + 8 * 8 * 8 * 9
    manifest = json.loads(out.with_suffix(".json").read_text())
    assert "mean_psnr_db" in manifest["runs"]["average"]["metrics"]


def test_blind_mode_emits_both(trained, tmp_path):
    root, ckpt = trained
    assert _colorize(root, ckpt, tmp_path, "--operator", "blind") == EXIT_OK
    assert (tmp_path / "img0000_average.png").exists() and (tmp_path / "img0000_luma.png").exists()


def test_color_input_needs_explicit_flag(trained, tmp_path):
    root, ckpt = trained
    color = root / "held" / "color" / "img0001.png"
    args = ["colorize", "--checkpoint", str(ckpt), "--input", str(color), "--output", str(tmp_path / "x.png"),
            "--n-steps", "2"]
    assert main(args) == EXIT_RUNTIME
    assert main(args + ["--from-color", "luma"]) == EXIT_OK


def test_divided(tmp_path):
    for domain in ("image", "gradient"):
        assert main(["train", "--output", str(tmp_path / f"{domain}.ckpt"), "--domain", domain, *TINY]) == EXIT_OK
    gray = tmp_path / "g.png"
    write_png(gray, np.random.default_rng(0).random((8, 8)))
    base = ["colorize-divided", "--image-checkpoint", str(tmp_path / "image.ckpt"),
            "--gradient-checkpoint", str(tmp_path / "gradient.ckpt"), "--input", str(gray), "--n-steps", "2",
            "--dc-weight-gradient", "0.5"]
    assert main(base + ["--output", str(tmp_path / "a.png")]) == EXIT_OK
    assert main(base + ["--output", str(tmp_path / "b.png")]) == EXIT_OK
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    sampler = json.loads((tmp_path / "a.json").read_text())["sampler"]
    assert sampler["dc_weights"] == [1.0, 0.5]
    swapped = ["colorize-divided", "--image-checkpoint", str(tmp_path / "gradient.ckpt"),
               "--gradient-checkpoint", str(tmp_path / "image.ckpt"), "--input", str(gray),
               "--output", str(tmp_path / "c.png")]
    assert main(swapped) == EXIT_RUNTIME


def test_sample_deterministic(trained, tmp_path):
    _, ckpt = trained
    for d in ("a", "b"):
        assert main(["sample", "--checkpoint", str(ckpt), "--output", str(tmp_path / d), "--count", "2",
                     "--height", "8", "--width", "8", "--n-steps", "3"]) == EXIT_OK
    for k in range(2):
        assert (tmp_path / "a" / f"sample{k:03d}.png").read_bytes() == (tmp_path / "b" / f"sample{k:03d}.png").read_bytes()


def test_train_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["train", "--output", str(tmp_path / f"{name}.ckpt"), *TINY]) == EXIT_OK
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_evaluate_against_itself(trained, tmp_path, capsys):
    root, _ = trained
    color = root / "held" / "color"
    out = tmp_path / "m.csv"
    assert main(["evaluate", "--pred", str(color), "--ref", str(color), "--output", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 4
    assert all(float(r["psnr_db"]) == 99.0 and float(r["ssim"]) == 1.0 for r in rows)
    first = out.read_bytes()
    assert main(["evaluate", "--pred", str(color), "--ref", str(color), "--output", str(out)]) == EXIT_OK
    assert out.read_bytes() == first


def test_usage_errors(tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(["colorize"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["evaluate", "--pred", "x", "--ref", "y", "--bogus", "1"]) == EXIT_USAGE
    assert main(["oracle-check", "--only", "no-such-check"]) == EXIT_USAGE
    assert main(["colorize", "--checkpoint", "c", "--input", "i", "--output", "o", "--operator", "sepia"]) == EXIT_USAGE


def test_runtime_errors(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    gray = tmp_path / "g.png"
    write_png(gray, np.zeros((4, 4)))
    assert main(["colorize", "--checkpoint", str(bad), "--input", str(gray), "--output", str(tmp_path / "o.png")]) == EXIT_RUNTIME
    assert main(["evaluate", "--pred", str(tmp_path / "nope"), "--ref", str(tmp_path)]) == EXIT_RUNTIME


def test_oracle_check_subset(capsys):
    assert main(["oracle-check", "--only", "merge solver vs dense solve", "--only", "determinism"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "[PASS] merge solver vs dense solve" in out and "2/2 checks passed" in out


@pytest.mark.slow
def test_oracle_check_default_exits_zero():
    assert main(["oracle-check"]) == EXIT_OK
