import json

import numpy as np
import pytest
from click.testing import CliRunner

from grip import io as gio
from grip.cli import exit_code_for, main
from grip.exceptions import (ConfigError, FlatSignal, MissingContext, NumericalDivergence,
                             StaticityViolation)
from grip.fixtures import TPOSE_FRAMES


@pytest.fixture
def run(tmp_path):
    runner = CliRunner()

    def _run(*args):
        return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)

    return _run


def test_exit_code_mapping():
    assert exit_code_for(MissingContext("x")) == 2
    assert exit_code_for(ConfigError("k", "bad")) == 2
    assert exit_code_for(FlatSignal("x")) == 2
    assert exit_code_for(FileNotFoundError("x")) == 2
    assert exit_code_for(StaticityViolation("x")) == 1
    assert exit_code_for(NumericalDivergence("x")) == 1
    assert exit_code_for(RuntimeError("x")) == 1


def test_version_and_help(run):
    assert run("--version").exit_code == 0
    res = run("--help")
    for cmd in ("calibrate", "sync", "estimate", "simulate", "evaluate", "fixture"):
        assert cmd in res.output


def test_fixture_is_deterministic(run, tmp_path):
    a, b, c = tmp_path / "a.jsonl", tmp_path / "b.jsonl", tmp_path / "c.jsonl"
    assert run("fixture", "gait", "-o", a, "--seed", 5, "--frames", 50).exit_code == 0
    assert run("fixture", "gait", "-o", b, "--seed", 5, "--frames", 50).exit_code == 0
    assert run("fixture", "gait", "-o", c, "--seed", 6, "--frames", 50).exit_code == 0
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()
    seq = gio.load_sequence(a)
    assert len(seq) == TPOSE_FRAMES + 50 and seq.truth is not None


def test_fixture_follows_sensor_selection(run, tmp_path):
    out = tmp_path / "s.jsonl"
    assert run("fixture", "standing", "-o", out, "--frames", 20, "--sensors", "6").exit_code == 0
    seq = gio.load_sequence(out)
    assert len(seq.devices) == 6 and not seq.pressure
    res = run("fixture", "standing", "--sensors", "8")
    assert res.exit_code == 2


def test_calibrate_fixture(run, tmp_path):
    raw, out, again = tmp_path / "raw.jsonl", tmp_path / "cal.jsonl", tmp_path / "cal2.jsonl"
    assert run("fixture", "standing", "--raw", "-o", raw, "--frames", 100).exit_code == 0
    assert run("calibrate", raw, "-o", out).exit_code == 0
    assert run("calibrate", raw, "-o", again).exit_code == 0
    assert out.read_bytes() == again.read_bytes()
    seq = gio.load_sequence(out)
    still = np.linalg.norm(seq.accels[:TPOSE_FRAMES], axis=-1)
    assert still.mean() < 0.05


def test_calibrate_without_tpose_window(run, tmp_path):
    raw, broken = tmp_path / "raw.jsonl", tmp_path / "broken.jsonl"
    run("fixture", "standing", "--raw", "-o", raw, "--frames", 10)
    lines = raw.read_text().splitlines()
    header = json.loads(lines[0])
    header["tpose_window"] = None
    broken.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
    res = run("calibrate", broken)
    assert res.exit_code == 2
    assert "MissingContext" in res.stderr


def test_sync_recovers_planted_offsets(run, tmp_path):
    seq, rep = tmp_path / "j.jsonl", tmp_path / "off.json"
    assert run("fixture", "jump", "-o", seq, "--offsets", "10,-5,0,25").exit_code == 0
    assert run("sync", seq, "-o", rep, "--apply", tmp_path / "synced.jsonl").exit_code == 0
    report = json.loads(rep.read_text())
    assert report["offsets"] == [10, -5, 0, 25] and report["flat"] == []
    synced = gio.load_sequence(tmp_path / "synced.jsonl")
    assert len(synced) == report["window"][1] - report["window"][0]


def test_sync_single_stream(run, tmp_path):
    seq, rep = tmp_path / "j.jsonl", tmp_path / "off.json"
    assert run("fixture", "jump", "-o", seq, "--sensors", "2").exit_code == 0
    assert run("sync", seq, "-o", rep, "--sensors", "2").exit_code == 0
    assert json.loads(rep.read_text())["offsets"] == [0, 0]


def test_sync_flat_stream(run, tmp_path):
    src = tmp_path / "j.jsonl"
    run("fixture", "jump", "-o", src)
    data = gio.load_sequence(src)
    data.accels[:, 1] = 0.0
    flat = tmp_path / "flat.jsonl"
    gio.save_sequence(data, flat)
    res = run("sync", flat, "-o", tmp_path / "off.json")
    assert res.exit_code == 2
    assert "warning" in res.stderr and "FlatSignal" in res.stderr
    report = json.loads((tmp_path / "off.json").read_text())
    assert report["flat"] == [data.devices[1]] and report["offsets"][1] is None


def test_estimate_oracle_matches_truth(run, tmp_path):
    seq, est, est2 = tmp_path / "g.jsonl", tmp_path / "e.jsonl", tmp_path / "e2.jsonl"
    run("fixture", "gait", "-o", seq, "--frames", 30)
    assert run("estimate", seq, "-o", est, "--oracle").exit_code == 0
    assert run("estimate", seq, "-o", est2).exit_code == 0
    assert est.read_bytes() == est2.read_bytes()
    from grip.pipeline import truth_estimates

    kin = gio.load_estimate(est)
    truth = truth_estimates(gio.load_sequence(seq))
    assert np.array_equal(kin.flatten(), truth.flatten())
    assert (kin.p_leaf.shape[1:], kin.p.shape[1:], kin.theta.shape[1:], kin.v_key.shape[1:]) == \
        ((5, 3), (24, 3), (24, 6), (6, 3))


def test_estimate_checkpoint_layout_mismatch(run, tmp_path):
    import torch

    from grip.kinnet import StagedKinematicsNet, save_checkpoint

    seq, ck = tmp_path / "g.jsonl", tmp_path / "ck.json"
    run("fixture", "gait", "-o", seq, "--frames", 10)
    torch.manual_seed(0)
    save_checkpoint(StagedKinematicsNet(obs_width=34, hidden=4), ck)
    assert run("estimate", seq, "--checkpoint", ck).exit_code == 2
    ok = run("estimate", seq, "--checkpoint", ck, "--sensors", "2+pressure", "-o", tmp_path / "e.jsonl")
    assert ok.exit_code == 0
    assert len(gio.load_estimate(tmp_path / "e.jsonl")) == TPOSE_FRAMES + 10
    assert run("estimate", seq, "--checkpoint", tmp_path / "none.json").exit_code == 2


def test_evaluate_identity(run, tmp_path):
    seq, est, rep = tmp_path / "g.jsonl", tmp_path / "e.jsonl", tmp_path / "r.json"
    run("fixture", "gait", "-o", seq, "--frames", 60)
    run("estimate", seq, "-o", est)
    assert run("evaluate", seq, seq, "-o", rep).exit_code == 0
    report = json.loads(rep.read_text())
    for key in ("MPJPE", "PEL-MPJPE", "PA-MPJPE", "MPJRE", "Acc", "FS", "FP", "vGRF", "Success Rate"):
        assert key in report["metrics"]
    for key in ("MPJPE", "PEL-MPJPE", "MPJRE", "Acc"):
        assert report["metrics"][key] == 0.0
    assert report["metrics"]["PA-MPJPE"] < 1e-9
    assert run("evaluate", est, seq, "-o", rep).exit_code == 0
    assert json.loads(rep.read_text())["metrics"]["MPJPE"] < 1e-9
    assert run("evaluate", rep, seq).exit_code == 2


def test_bad_config_exits_2(run, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"fall": {"tau_z": -1}}))
    res = run("fixture", "standing", "--config", cfg, "--frames", 5)
    assert res.exit_code == 2 and "fall.tau_z" in res.stderr
    assert run("fixture", "standing", "--config", tmp_path / "missing.json").exit_code == 2
    assert run("evaluate", tmp_path / "a", tmp_path / "b").exit_code == 2


def test_simulate_passive_falls_and_recovers(run, tmp_path):
    seq, est, roll = tmp_path / "s.jsonl", tmp_path / "e.jsonl", tmp_path / "r.jsonl"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kinnet": {"buffer_frames": 20}}))
    run("fixture", "standing", "-o", seq, "--frames", 150)
    run("estimate", seq, "-o", est)
    res = run("simulate", seq, est, "-o", roll, "--policy", "passive", "--config", cfg)
    assert res.exit_code == 0
    rollout, header = gio.rollout_from_text(roll.read_text())
    assert len(rollout) == len(gio.load_sequence(seq))
    assert header["fall_frames"] and header["recoveries"]
    frame, first, last = header["recoveries"][0]
    assert last - first + 1 <= 20
    truth = gio.load_sequence(seq).truth
    # replaced frames are the buffered kinematic poses (rotations exactly)
    assert np.allclose(rollout.joint_rot[last], truth.joint_rot[last], atol=1e-12)
    assert run("evaluate", roll, seq, "-o", tmp_path / "rep.json").exit_code == 0
    assert json.loads((tmp_path / "rep.json").read_text())["metrics"]["Success Rate"] == 0.0


@pytest.mark.slow
def test_simulate_standing_fixture(run, tmp_path):
    seq, est, roll = tmp_path / "s.jsonl", tmp_path / "e.jsonl", tmp_path / "r.jsonl"
    run("fixture", "standing", "-o", seq, "--frames", 500 - TPOSE_FRAMES)
    run("estimate", seq, "-o", est)
    assert run("simulate", seq, est, "-o", roll).exit_code == 0
    rollout, header = gio.rollout_from_text(roll.read_text())
    assert len(rollout) == 500 and header["fall_frames"] == []
    rep = tmp_path / "rep.json"
    assert run("evaluate", roll, seq, "-o", rep).exit_code == 0
    assert json.loads(rep.read_text())["metrics"]["Success Rate"] == 1.0
