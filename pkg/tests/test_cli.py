import json

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from vanishing_depth.cli import run_cli
from vanishing_depth.config import TrainConfig, save_config
from vanishing_depth.lib.depth import load_depth_png, read_intrinsics, save_depth_png


@pytest.fixture
def depth_png(tmp_path):
    depth = np.random.default_rng(0).integers(500, 9000, size=(8, 10)) / 1000.0
    depth[0, 0] = 0.0
    path = tmp_path / "d.png"
    save_depth_png(depth, path)
    return path, depth


def test_freqs_prints_the_table(capsys):
    assert run_cli(["freqs", "--channels", "32", "--max-depth", "15"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 16
    index, wavelength = lines[1].split(",")
    assert index == "1"
    assert float(wavelength) == pytest.approx(9034.65, abs=0.01)


def test_freqs_in_meters(capsys):
    run_cli(["freqs", "--channels", "16", "--max-depth", "500", "--unit", "m"])
    lines = capsys.readouterr().out.strip().splitlines()
    assert float(lines[1].split(",")[1]) == pytest.approx(181.3887, abs=0.01)


def test_unknown_flag_is_usage_error():
    assert run_cli(["freqs", "--bogus"]) == 2
    assert run_cli([]) == 2


def test_missing_config_names_the_path(tmp_path, capsys):
    missing = tmp_path / "missing.toml"
    assert run_cli(["train", "--config", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_synth_is_reproducible(tmp_path):
    for name in ("a", "b"):
        assert run_cli(["synth", "--count", "8", "--seed", "7", "--height", "16", "--width", "16", "--out", str(tmp_path / name)]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len([f for f in files if f.startswith("rgb_")]) == 8
    assert len([f for f in files if f.startswith("depth_")]) == 8
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    depth = load_depth_png(tmp_path / "a" / "depth_0000.png")
    assert depth.shape == (16, 16) and (depth > 0).all()
    assert read_intrinsics(tmp_path / "a" / "intrinsics_0000.txt").fx > 0


def test_encode_and_decode(tmp_path, depth_png):
    path, depth = depth_png
    enc = tmp_path / "enc.npy"
    assert run_cli(["encode", "--depth", str(path), "--out", str(enc), "--dump-channels", str(tmp_path / "chans")]) == 0
    tensor = np.load(enc)
    assert tensor.shape == (32, 8, 10)
    assert len(list((tmp_path / "chans").glob("pde_*.pgm"))) == 32

    out = tmp_path / "decoded.png"
    assert run_cli(["decode", "--enc", str(enc), "--max-depth-used", "15", "--out", str(out)]) == 0
    assert np.abs(load_depth_png(out) - depth).max() <= 0.002


def test_encode_p3de_needs_intrinsics(tmp_path, depth_png, capsys):
    path, _ = depth_png
    assert run_cli(["encode", "--depth", str(path), "--out", str(tmp_path / "e.npy"), "--encoding", "p3de"]) == 1
    assert "intrinsics" in capsys.readouterr().err


def test_encode_rejects_8_bit_png(tmp_path):
    path = tmp_path / "gray.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(path)
    assert run_cli(["encode", "--depth", str(path), "--out", str(tmp_path / "e.npy")]) == 1


def test_mask_command(tmp_path, depth_png):
    path, depth = depth_png
    out = tmp_path / "m.png"
    assert run_cli(["mask", "--kind", "perlin", "--cells", "2", "--target", "0.5", "--valid", str(path), "--out", str(out)]) == 0
    mask = np.array(Image.open(out)) == 255
    valid = depth > 0
    assert mask.shape == depth.shape
    assert not (mask & ~valid).any()
    assert mask.sum() == int(np.floor(0.5 * valid.sum() + 0.5))


def test_mask_target_out_of_range(tmp_path):
    assert run_cli(["mask", "--target", "1.0", "--out", str(tmp_path / "m.png")]) == 1


def test_augment_command(tmp_path, depth_png):
    path, depth = depth_png
    out, record = tmp_path / "r.png", tmp_path / "r.jsonl"
    for seed in ("1", "2"):
        assert run_cli(["augment", "--depth", str(path), "--out", str(out), "--seed", seed, "--record", str(record)]) == 0
    lines = record.read_text().strip().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["mode"] in ("jitter", "bin_rescale", "offset", "identity")
    result = load_depth_png(out)
    assert (result[depth == 0] == 0).all()
    assert result.max() <= 15.0


def test_train_then_eval(tmp_path, capsys):
    cfg = TrainConfig(
        steps=2, batch_size=1, height=16, width=16, train_scenes=2, eval_scenes=1, eval_every=0,
        checkpoint_every=0, pde_channels=4, widths=(4, 8, 8, 8), decoder_width=4, maxd_width=128,
    )
    save_config(cfg, tmp_path / "cfg.txt")
    run = tmp_path / "run"
    assert run_cli(["train", "--config", str(tmp_path / "cfg.txt"), "--out", str(run), "--no-progress"]) == 0
    assert (run / "model.vdck").is_file()

    metrics = tmp_path / "metrics.csv"
    assert run_cli(["eval", "--checkpoint", str(run / "model.vdck"), "--metrics", str(metrics), "--scale-sweep"]) == 0
    out = capsys.readouterr().out
    assert "auc-rmse" in out and "depth-scale study" in out
    row = pd.read_csv(metrics).iloc[0]
    assert row["step"] == 2
    assert row["rmse_mm"] == pytest.approx(pd.read_csv(run / "metrics.csv")["rmse_mm"].iloc[-1])


def test_train_overrides(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("height=16\nwidth=16\ntrain_scenes=1\neval_scenes=1\neval_every=0\ncheckpoint_every=0\n"
                    "pde_channels=4\nwidths=4,8,8,8\ndecoder_width=4\nmaxd_width=128\nbatch_size=1\n")
    run = tmp_path / "run"
    assert run_cli(["train", "--config", str(path), "--out", str(run), "--steps", "1", "--encoding", "norm", "--no-progress"]) == 0
    saved = (run / "config.txt").read_text()
    assert "steps=1\n" in saved and "encoding=norm\n" in saved
