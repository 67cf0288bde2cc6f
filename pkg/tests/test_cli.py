import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from raindiff.cli import evaluation_csv, main, to_pgm
from raindiff.config import load_config
from raindiff.data import FrameSequence, load_nrf, save_nrf
from raindiff.metrics import evaluate_report

TINY = """\
resolution = 16
diffusion_steps = 10
levels = 2
base_channels = 4
embed_dim = 8
lr = 1e-3
batch_size = 2
steps = 6
checkpoint_every = 3
synth_count = 2
synth_frames = 10
fss_n = 3
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    return p


@pytest.fixture
def trained(tmp_path, cfg_path):
    data = tmp_path / "data"
    assert main(["synth", "--config", str(cfg_path), "--out", str(data)]) == 0
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--data", str(data), "--out", str(run)]) == 0
    return data, run


def test_synth_writes_loadable_files(tmp_path, cfg_path):
    out = tmp_path / "a"
    assert main(["synth", "--config", str(cfg_path), "--out", str(out)]) == 0
    files = sorted(out.glob("*.nrf"))
    assert len(files) == 2
    assert load_nrf(files[0]).shape == (10, 16, 16)


def test_synth_is_byte_identical_per_seed(tmp_path, cfg_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["synth", "--config", str(cfg_path), "--out", str(a), "--seed", "4"])
    main(["synth", "--config", str(cfg_path), "--out", str(b), "--seed", "4"])
    for fa, fb in zip(sorted(a.glob("*.nrf")), sorted(b.glob("*.nrf"))):
        assert fa.read_bytes() == fb.read_bytes()


def test_synth_zero_count(tmp_path, cfg_path):
    out = tmp_path / "empty"
    assert main(["synth", "--config", str(cfg_path), "--out", str(out), "--count", "0"]) == 0
    assert list(out.glob("*.nrf")) == []


def test_synth_unwritable_path(tmp_path, cfg_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["synth", "--config", str(cfg_path), "--out", str(blocker / "sub")]) == 2


def test_train_writes_checkpoint_and_log(trained):
    _, run = trained
    assert (run / "checkpoint.pt").exists()
    rows = (run / "loss.csv").read_text().splitlines()
    assert rows[0] == "step,loss"
    assert [int(r.split(",")[0]) for r in rows[1:]] == list(range(1, 7))
    assert "resolution = 16" in (run / "config.txt").read_text()


def test_train_resume_continues_step_counter(tmp_path, cfg_path, trained):
    data, run = trained
    assert main(["train", "--config", str(cfg_path), "--data", str(data), "--out", str(run),
                 "--resume", str(run / "checkpoint.pt"), "--steps", "9"]) == 0
    steps = [int(r.split(",")[0]) for r in (run / "loss.csv").read_text().splitlines()[1:]]
    assert steps == list(range(1, 10))


def test_train_missing_data(tmp_path, cfg_path):
    assert main(["train", "--config", str(cfg_path), "--data", str(tmp_path / "none"),
                 "--out", str(tmp_path / "r")]) == 2


def test_predict_shape_range_and_determinism(tmp_path, cfg_path, trained):
    data, run = trained
    src = sorted(data.glob("*.nrf"))[0]
    outs = []
    for name in ("p1.nrf", "p2.nrf"):
        out = tmp_path / name
        assert main(["predict", "--checkpoint", str(run / "checkpoint.pt"), "--input", str(src),
                     "--output", str(out), "--seed", "3"]) == 0
        outs.append(out)
    pred = load_nrf(outs[0])
    assert pred.shape == (4, 16, 16)
    assert pred.frames.min() >= 0 and pred.frames.max() <= 128
    assert outs[0].read_bytes() == outs[1].read_bytes()


def test_predict_resolution_mismatch(tmp_path, trained):
    _, run = trained
    big = tmp_path / "big.nrf"
    save_nrf(FrameSequence(np.zeros((4, 32, 32))), big)
    assert main(["predict", "--checkpoint", str(run / "checkpoint.pt"), "--input", str(big),
                 "--output", str(tmp_path / "o.nrf")]) == 2


def test_evaluate_perfect_and_degenerate(tmp_path, capsys):
    rng = np.random.default_rng(0)
    obs = tmp_path / "obs.nrf"
    save_nrf(FrameSequence(rng.random((4, 16, 16)) * 20), obs)
    assert main(["evaluate", "--pred", str(obs), "--obs", str(obs), "--fss-n", "3"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["metric", "band", "value"]
    values = {(m, b): v for m, b, v in rows[1:]}
    assert values[("csi", ">2")] == "1.000000"
    assert values[("hss", ">2")] == "1.000000"
    assert values[("fss", ">2")] == "1.000000"
    assert values[("mse", "all")] == "0.000000"

    zero = tmp_path / "zero.nrf"
    save_nrf(FrameSequence(np.zeros((4, 16, 16))), zero)
    out = tmp_path / "m.csv"
    assert main(["evaluate", "--pred", str(zero), "--obs", str(zero), "--output", str(out)]) == 0
    text = out.read_text()
    assert "csi,0-2,1.000000" in text
    assert "csi,>8,undefined" in text


def test_evaluate_matches_direct_metric_calls(tmp_path):
    rng = np.random.default_rng(1)
    p, o = tmp_path / "p.nrf", tmp_path / "o.nrf"
    save_nrf(FrameSequence(rng.random((4, 16, 16)) * 12), p)
    save_nrf(FrameSequence(rng.random((4, 16, 16)) * 12), o)
    out = tmp_path / "m.csv"
    assert main(["evaluate", "--pred", str(p), "--obs", str(o), "--fss-n", "5",
                 "--hss-mode", "paper", "--output", str(out)]) == 0
    pf, of = load_nrf(p).frames, load_nrf(o).frames
    report = evaluate_report(pf, of, n=5, hss_mode="paper")
    assert out.read_text().startswith(report.to_csv())
    cfg = load_config(None, {"fss_n": 5, "hss_mode": "paper"})
    assert out.read_text() == evaluation_csv(pf, of, cfg)


def test_evaluate_shape_mismatch(tmp_path):
    a, b = tmp_path / "a.nrf", tmp_path / "b.nrf"
    save_nrf(FrameSequence(np.zeros((4, 16, 16))), a)
    save_nrf(FrameSequence(np.zeros((3, 16, 16))), b)
    assert main(["evaluate", "--pred", str(a), "--obs", str(b)]) == 2


def test_render_pixels(tmp_path):
    seq = FrameSequence(np.array([[[0.0, 64.0], [128.0, 32.0]]] * 3))
    src = tmp_path / "s.nrf"
    save_nrf(seq, src)
    assert main(["render", str(src), "--out", str(tmp_path / "img")]) == 0
    files = sorted((tmp_path / "img").glob("*.pgm"))
    assert len(files) == 3
    raw = files[0].read_bytes()
    assert raw.startswith(b"P5\n2 2\n255\n")
    assert list(raw[-4:]) == [0, 128, 255, 64]


def test_pgm_rounding():
    assert list(to_pgm(np.array([[0.0, 128.0, 64.0]]))[-3:]) == [0, 255, 128]


def test_usage_errors_exit_one(tmp_path, cfg_path):
    assert main_exit(["bogus"]) == 1
    assert main_exit(["evaluate", "--pred", "x"]) == 1
    assert main(["synth", "--config", str(cfg_path), "--out", str(tmp_path), "--resolution", "40"]) == 1


def main_exit(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    return exc.value.code


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "raindiff", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("synth", "train", "predict", "evaluate", "render"):
        assert cmd in proc.stdout


def test_resumed_training_equals_uninterrupted(tmp_path, cfg_path, trained):
    import torch

    from raindiff.model import load_checkpoint

    data, run = trained
    main(["train", "--config", str(cfg_path), "--data", str(data), "--out", str(run),
          "--resume", str(run / "checkpoint.pt"), "--steps", "9"])
    straight = tmp_path / "straight"
    main(["train", "--config", str(cfg_path), "--data", str(data), "--out", str(straight),
          "--steps", "9"])
    a, _ = load_checkpoint(run / "checkpoint.pt")
    b, _ = load_checkpoint(straight / "checkpoint.pt")
    for (k, va), vb in zip(a.state_dict().items(), b.state_dict().values()):
        assert torch.equal(va, vb), k
    assert (run / "loss.csv").read_text() == (straight / "loss.csv").read_text()
