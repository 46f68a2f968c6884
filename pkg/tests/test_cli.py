import json
import logging

import numpy as np
import pytest

from rsevi.cli import main
from rsevi.events import EventStream
from rsevi.formats import read_events, read_frame, read_trace, write_events, write_frame
from rsevi.imaging import Frame
from rsevi.synthetic import write_sequence


def run(*argv):
    return main([str(a) for a in argv])


def static_sequence(directory, n, H, W, fps):
    img = np.random.default_rng(0).random((H, W))
    for i in range(n):
        write_frame(directory / f"f_{i:04d}.frm", Frame(img, i / fps))
    return img


def test_simulate_outputs(sim_dir):
    m = json.loads((sim_dir / "manifest.json").read_text())
    assert len(m["rs_frames"]) == 3
    assert m["rs_frame_rate"] == pytest.approx(800 / 64)
    assert (sim_dir / "oracle_0000.dfb").read_bytes()[:4] == b"DFB1"
    assert read_events(sim_dir / "events.evs").t.size == m["events"]["count"] > 0
    rs = read_frame(sim_dir / "rs_0000.frm")
    assert rs.data.shape == (64, 64)


def test_simulate_static_has_no_events(tmp_path):
    src = tmp_path / "gs"
    src.mkdir()
    static_sequence(src, 20, 8, 6, 100.0)
    assert run("simulate", src, "--fps", 100, "--out", tmp_path / "o") == 0
    assert read_events(tmp_path / "o" / "events.evs").t.size == 0


def test_simulate_rowwise_frame_rate(tmp_path):
    src = tmp_path / "gs"
    src.mkdir()
    static_sequence(src, 260, 260, 3, 120.0)
    assert run("simulate", src, "--fps", 120, "--out", tmp_path / "o") == 0
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["rs_frame_rate"] == pytest.approx(0.4615, abs=1e-4)


def test_simulate_rerun_is_byte_identical(tmp_path, gs_dir, motion_file):
    for name in ("a", "b"):
        assert run("simulate", gs_dir, "--fps", 800, "--out", tmp_path / name, "--motion", motion_file,
                   "--seed", 3) == 0
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_simulate_input_errors(tmp_path):
    assert run("simulate", tmp_path / "missing", "--fps", 10, "--out", tmp_path / "o") == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("simulate", empty, "--fps", 10, "--out", tmp_path / "o") == 2
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "a.frm").write_bytes(b"NOPE" + bytes(40))
    (bad / "b.frm").write_bytes(b"NOPE" + bytes(40))
    assert run("simulate", bad, "--fps", 10, "--out", tmp_path / "o") == 2


def test_interpolate_synthetic_meets_psnr(tmp_path, sim_dir, gt_dir):
    out = tmp_path / "out"
    code = run("interpolate", sim_dir / "rs_0000.frm", sim_dir / "rs_0001.frm", sim_dir / "events.evs",
               "--manifest", sim_dir / "manifest.json", "--out", out, "--gt", gt_dir, "--margin", 8)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["evaluation"]["mean_psnr"] >= 33.0
    assert sorted(p.name for p in out.glob("gs_*.frm")) == [f"gs_{j:04d}.frm" for j in range(4)]
    trace = read_trace(out / "loss_trace.csv")
    assert all(b["total"] <= a["total"] for a, b in zip(trace, trace[1:]))
    assert len((out / "timestamps.txt").read_text().split()) == 4


def _static_pair(tmp_path, H, W):
    img = np.random.default_rng(1).random((H, W)).astype(np.float32).astype(np.float64)
    write_frame(tmp_path / "r0.frm", Frame(img, 0.0))
    write_frame(tmp_path / "r1.frm", Frame(img, 0.05))
    write_events(tmp_path / "e.evs", EventStream.empty(W, H, 0.0, 0.1))
    return img


def test_interpolate_static_k2_returns_inputs(tmp_path):
    img = _static_pair(tmp_path, 16, 20)
    code = run("interpolate", tmp_path / "r0.frm", tmp_path / "r1.frm", tmp_path / "e.evs",
               "--times0", 0.0, 0.04, "--times1", 0.05, 0.09, "--factor", 2, "--out", tmp_path / "o")
    assert code == 0
    for j in range(2):
        assert np.array_equal(read_frame(tmp_path / "o" / f"gs_{j:04d}.frm").data, img)


def test_interpolate_large_k_logs_frame_times(tmp_path, caplog):
    _static_pair(tmp_path, 260, 346)
    with caplog.at_level(logging.INFO, logger="rsevi.pipeline"):
        code = run("interpolate", tmp_path / "r0.frm", tmp_path / "r1.frm", tmp_path / "e.evs",
                   "--times0", 0.0, 0.04, "--times1", 0.05, 0.09, "--factor", 32, "--iters", 1,
                   "--out", tmp_path / "o")
    assert code == 0
    assert len(list((tmp_path / "o").glob("gs_*.frm"))) == 32
    assert sum("took" in r.getMessage() for r in caplog.records) == 32


def test_interpolate_inconsistent_windows(tmp_path, sim_dir):
    code = run("interpolate", sim_dir / "rs_0001.frm", sim_dir / "rs_0000.frm", sim_dir / "events.evs",
               "--manifest", sim_dir / "manifest.json", "--out", tmp_path / "o")
    assert code == 3


def test_interpolate_rejects_wrong_magic(tmp_path, sim_dir):
    code = run("interpolate", sim_dir / "rs_0000.frm", sim_dir / "rs_0001.frm", sim_dir / "rs_0000.frm",
               "--manifest", sim_dir / "manifest.json", "--out", tmp_path / "o")
    assert code == 2


def test_evaluate_cases(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    img = np.full((16, 16), 0.25)
    for j in range(2):
        write_frame(a / f"p_{j}.frm", Frame(img))
        write_frame(b / f"g_{j}.frm", Frame(img))
    assert run("evaluate", a, b) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "frame,psnr,ssim"
    assert lines[-1] == "mean,99.000000,1.000000"
    write_frame(b / "g_1.frm", Frame(img + 0.125))
    write_frame(b / "g_0.frm", Frame(img + 0.125))
    assert run("evaluate", a, b, "--out", tmp_path / "m.csv") == 0
    mean = (tmp_path / "m.csv").read_text().splitlines()[-1].split(",")
    assert float(mean[1]) == pytest.approx(-10 * np.log10(0.125 ** 2), abs=1e-5)
    c, d = tmp_path / "c", tmp_path / "d"
    c.mkdir(), d.mkdir()
    assert run("evaluate", c, d) == 2
    write_frame(c / "x.frm", Frame(img))
    assert run("evaluate", c, a) == 3


def test_evaluate_uniform_offset_is_20db(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    write_frame(a / "p.frm", Frame(np.full((16, 16), 0.5)))
    write_frame(b / "g.frm", Frame(np.full((16, 16), 0.6)))
    assert run("evaluate", a, b) == 0
    psnr_value = float(capsys.readouterr().out.splitlines()[1].split(",")[1])
    assert psnr_value == pytest.approx(20.0, abs=1e-5)   # f32 storage of 0.6


def test_bandwidth_command(tmp_path, capsys):
    ev = tmp_path / "e.evs"
    write_events(ev, EventStream.empty(346, 260, 0.0, 1.0))
    assert run("bandwidth", ev, "--rs-fps", 4, "--target-fps", 128, "--seconds", 1) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["reduction_ratio"] == 0.96875 and rep["clamped"] is False
    assert run("bandwidth", ev, "--rs-fps", 4, "--target-fps", 128, "--seconds", 0) == 2
    assert run("bandwidth", ev, "--rs-fps", 4, "--target-fps", 128, "--seconds", 1, "--out",
               tmp_path / "r.json") == 0
    assert json.loads((tmp_path / "r.json").read_text())["video_params"] == 128 * 260 * 346


def test_bandwidth_median_rate_stream(tmp_path, capsys):
    H, W, k = 260, 346, 17
    t = np.repeat((np.arange(k) + 0.5) / k, H * W)
    y, x = np.divmod(np.tile(np.arange(H * W), k), W)
    ev = tmp_path / "e.evs"
    write_events(ev, EventStream(t, x, y, np.ones(t.size), W, H, 0.0, 1.0))
    assert run("bandwidth", ev, "--rs-fps", 24, "--target-fps", 128, "--seconds", 1) == 0
    assert json.loads(capsys.readouterr().out)["reduction_ratio"] == pytest.approx(0.281, abs=1e-3)


def test_threads_env_overrides_flag(tmp_path, monkeypatch):
    monkeypatch.setenv("RSEVI_THREADS", "0")
    src = tmp_path / "gs"
    src.mkdir()
    static_sequence(src, 4, 4, 4, 10.0)
    assert run("simulate", src, "--fps", 10, "--out", tmp_path / "o", "--rs-period", 0.1,
               "--rs-readout", 0.1, "--threads", 4) == 2


def test_write_sequence_helper(tmp_path, moving_scene):
    paths = write_sequence(moving_scene, [0.0, 0.01], tmp_path)
    assert [p.name for p in paths] == ["f_0000.frm", "f_0001.frm"]
