import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation
from sklearn.base import clone

from grip.calib import (GRAVITY, CalibrationContext, CalibratedImuStream, HeadsetExtrinsics,
                        InsoleCalibrator, RawImuStream, WatchStrapCalibrator, calibrate_headset,
                        calibrate_insole, calibrate_watch_strap, common_window,
                        estimate_reference_frame, insole_joint_signals, joint_to_sensor_from_tpose,
                        simulate_raw_insole, simulate_raw_watch, synchronize, synthesize_imu)
from grip.exceptions import (DegenerateTrajectory, FlatSignal, MissingContext, MissingTpose,
                             SequenceTooShort, StaticityViolation)
from grip.rotmath import exp_map, geodesic_angle, rot_x, rot_z
from grip.vqf import vqf_track


def rand_rot(seed):
    return Rotation.random(random_state=seed).as_matrix()


def floor_stream(r_g_r, n=300):
    return RawImuStream("watch", np.zeros((n, 3)), np.tile(-GRAVITY, (n, 1)),
                        np.repeat(r_g_r[None], n, axis=0))


def test_reference_frame_of_constant_orientation():
    q = rand_rot(1)
    assert np.allclose(estimate_reference_frame(floor_stream(q)), q, atol=1e-12)


def test_reference_frame_noise_monte_carlo():
    # 1000 floor placements, 3 s each, isotropic orientation noise of 0.5 deg rms
    rng = np.random.default_rng(7)
    q = rand_rot(2)
    sigma = np.radians(0.5) / np.sqrt(3)
    errs = []
    for _ in range(1000):
        noisy = q @ exp_map(rng.normal(0, sigma, (300, 3)))
        s = RawImuStream("watch", np.zeros((300, 3)), np.tile(-GRAVITY, (300, 1)), noisy)
        errs.append(geodesic_angle(estimate_reference_frame(s), q))
    assert np.degrees(max(errs)) < 0.1


def test_reference_frame_rejects_a_flip():
    n = 300
    acc = np.tile(-GRAVITY, (n, 1))
    acc[150:] = rot_x(np.pi / 2) @ -GRAVITY
    s = RawImuStream("watch", np.zeros((n, 3)), acc, np.repeat(np.eye(3)[None], n, axis=0))
    with pytest.raises(StaticityViolation):
        estimate_reference_frame(s)
    with pytest.raises(StaticityViolation):
        estimate_reference_frame(floor_stream(np.eye(3)), (0, 50))  # too short


def _motion(n=400, seed=0):
    rng = np.random.default_rng(seed)
    # still for 1.5 s, then a smooth start
    s = np.clip(np.arange(n) * 0.01 - 1.5, 0, None)
    w = rng.normal(0, 0.6, 3)
    rot = np.stack([exp_map(w * (1 - np.cos(si))) for si in s])
    pos = np.stack([0.1 * (1 - np.cos(2 * s)), 0.05 * (1 - np.cos(3 * s)), 1 + 0.1 * (1 - np.cos(s))], axis=1)
    return rot, pos


@given(st.integers(0, 2**31), st.integers(0, 2**31))
@settings(max_examples=20, deadline=None)
def test_watch_round_trip(s1, s2):
    rot, pos = _motion()
    truth = synthesize_imu(rot, pos)
    r_r_g, r_j_s = rand_rot(s1), rand_rot(s2)
    raw = simulate_raw_watch(truth, r_r_g, r_j_s)
    cal = WatchStrapCalibrator((0, 150), rot[0]).fit(raw, floor=floor_stream(r_r_g.T))
    out = cal.transform(raw)
    assert max(geodesic_angle(a, b) for a, b in zip(out.orientation, truth.orientation)) < 1e-6
    assert np.abs(out.accel - truth.accel).max() < 1e-6
    assert np.allclose(out.orientation[100], rot[0], atol=1e-9)
    assert np.abs(out.accel[:140]).max() < 1e-9


def test_watch_needs_context():
    rot, pos = _motion()
    raw = simulate_raw_watch(synthesize_imu(rot, pos), np.eye(3), np.eye(3))
    with pytest.raises(MissingContext):
        calibrate_watch_strap(raw, CalibrationContext())
    with pytest.raises(MissingContext):
        WatchStrapCalibrator((0, 150), rot[0]).fit(raw)
    with pytest.raises(MissingContext):
        WatchStrapCalibrator(None, rot[0]).fit(raw, floor=floor_stream(np.eye(3)))
    with pytest.raises(MissingContext):
        joint_to_sensor_from_tpose(raw, np.eye(3), (10, 10), rot[0])


def test_moving_tpose_is_rejected():
    rot, pos = _motion()
    raw = simulate_raw_watch(synthesize_imu(rot, pos), np.eye(3), np.eye(3))
    raw.accel[200:300] += np.random.default_rng(0).normal(0, 1, (100, 3))
    with pytest.raises(StaticityViolation):
        WatchStrapCalibrator((200, 300), rot[0]).fit(raw, floor=floor_stream(np.eye(3)))


def test_calibrator_is_an_sklearn_estimator():
    cal = WatchStrapCalibrator((0, 150), np.eye(3), static_bound=0.01)
    assert clone(cal).get_params()["static_bound"] == 0.01
    assert InsoleCalibrator("right").get_params()["side"] == "right"


def test_insole_handedness():
    s = RawImuStream("insole_left", np.array([[1.0, 2, 3]]), np.array([[1.0, 2, 3]]))
    g, a = insole_joint_signals(s, "left", np.eye(3))
    assert np.allclose(g, [[-1, 2, -3]]) and np.allclose(a, [[1, -2, 3]])
    g, a = insole_joint_signals(s, "right", np.eye(3))
    assert np.allclose(g, [[1, 2, 3]]) and np.allclose(a, [[1, 2, 3]])
    with pytest.raises(ValueError):
        insole_joint_signals(s, "middle", np.eye(3))


def test_insole_needs_tpose():
    s = RawImuStream("insole_left", np.zeros((10, 3)), np.tile(-GRAVITY, (10, 1)))
    with pytest.raises(MissingTpose):
        calibrate_insole(s, "left", np.eye(3), None, tpose_frame=0)
    with pytest.raises(MissingTpose):
        InsoleCalibrator("left").fit()


@pytest.mark.parametrize("side", ["left", "right"])
def test_insole_round_trip(side):
    rot, pos = _motion(600, seed=3)
    truth = synthesize_imu(rot, pos)
    r_s_j = rand_rot(11)
    raw = simulate_raw_insole(truth, side, r_s_j)
    out = InsoleCalibrator(side, r_s_j, rot[149], tpose_frame=149).fit().transform(raw)
    err = [np.degrees(geodesic_angle(a, b)) for a, b in zip(out.orientation[300:], truth.orientation[300:])]
    assert max(err) < 1.0


def test_insole_left_right_agree():
    rot, pos = _motion(600, seed=4)
    truth = synthesize_imu(rot, pos)
    outs = [InsoleCalibrator(side, np.eye(3), rot[149], tpose_frame=149).fit()
            .transform(simulate_raw_insole(truth, side, np.eye(3))) for side in ("left", "right")]
    assert np.allclose(outs[0].orientation, outs[1].orientation, atol=1e-12)


def test_vqf_examples():
    n = 300
    out = vqf_track(np.zeros((n, 3)), np.tile([0, 0, 9.81], (n, 1)))
    assert np.degrees(np.arccos(np.clip(out[-1][2, 2], -1, 1))) < 0.5
    # each sample integrates the step that ends at it, so 200 samples span 2 s
    out = vqf_track(np.tile([0, 0, 1.0], (200, 1)), np.tile([0, 0, 9.81], (200, 1)))
    yaw = np.arctan2(out[-1][1, 0], out[-1][0, 0])
    assert abs(yaw - 2.0) < 1e-3
    tilt = rot_x(0.3)
    out = vqf_track(np.zeros((n, 3)), np.tile(tilt.T @ [0, 0, 9.81], (n, 1)))
    up = out[-1] @ tilt.T @ [0, 0, 1.0]
    assert np.degrees(np.arccos(np.clip(up[2], -1, 1))) < 0.5


def _headset(n=60, seed=0):
    rng = np.random.default_rng(seed)
    mocap = rng.normal(size=(n, 3))
    dev = np.stack([rot_z(0.01 * k) for k in range(n)])
    return mocap, dev


def test_headset_identity_chain():
    mocap, dev = _headset()
    ext = HeadsetExtrinsics(np.eye(3), np.eye(3), dev, mocap)
    acc_i = np.einsum("tji,j->ti", dev, -GRAVITY)
    out = calibrate_headset(ext, mocap, acc_i)
    assert np.allclose(out.stream.orientation, dev, atol=1e-12)
    assert np.abs(out.stream.accel).max() < 1e-9


def test_headset_recovers_similarity():
    mocap, dev = _headset()
    r_w_g, t, s = rand_rot(5), np.array([0.3, -1.0, 2.0]), 1.7
    slam = (mocap - t) @ r_w_g / s  # inverse similarity: mocap = s R slam + t
    r_i_d, r_c_i = rand_rot(6), rand_rot(7)
    ext = HeadsetExtrinsics(r_i_d, r_c_i, dev, slam)
    out = calibrate_headset(ext, mocap, np.zeros((len(dev), 3)) + 1.0)
    assert np.allclose(out.world_to_global, r_w_g, atol=1e-9)
    assert np.allclose(out.translation, t, atol=1e-9) and abs(out.scale - s) < 1e-9
    expect = r_w_g @ dev @ r_i_d @ r_c_i
    assert max(geodesic_angle(a, b) for a, b in zip(out.stream.orientation, expect)) < 1e-9


def test_headset_degenerate_trajectory():
    mocap, dev = _headset(10)
    line = np.outer(np.arange(10.0), [1, 0, 0])
    with pytest.raises(DegenerateTrajectory):
        calibrate_headset(HeadsetExtrinsics(np.eye(3), np.eye(3), dev, line), line, np.zeros((10, 3)))
    with pytest.raises(DegenerateTrajectory):
        calibrate_headset(HeadsetExtrinsics(np.eye(3), np.eye(3), dev, mocap), mocap[:5], np.zeros((10, 3)))


def _jump_ref(n=800):
    x = np.zeros(n)
    for c in (250, 400, 550):
        x += 20 * np.exp(-0.5 * ((np.arange(n) - c) / 5.0) ** 2)
    return x


def _stream_from(vert):
    acc = np.zeros((len(vert), 3))
    acc[:, 2] = vert
    return CalibratedImuStream(np.repeat(np.eye(3)[None], len(vert), axis=0), acc)


def test_synchronize_examples():
    ref = _jump_ref()
    res = synchronize([_stream_from(np.roll(ref, 52))], ref)
    assert res.offsets == [52]
    res = synchronize([_stream_from(ref)], ref)
    assert res.offsets == [0] and res.window == (0, len(ref))
    res = synchronize([_stream_from(np.roll(ref, k)) for k in (10, -5, 0)], ref)
    assert res.offsets == [10, -5, 0]
    assert res.window == common_window([10, -5, 0], [800] * 3, 800) == (5, 790)
    assert all(len(s) == 785 for s in res.streams)
    assert np.allclose(res.streams[0].accel[:, 2], ref[5:790])
    with pytest.raises(FlatSignal):
        synchronize([_stream_from(np.zeros(800))], ref)


def test_synthesize_imu_examples():
    t = np.arange(0, 2, 0.01)
    rot = np.repeat(rot_z(0.2)[None], len(t), axis=0)
    out = synthesize_imu(rot, np.ones((len(t), 3)))
    assert np.allclose(out.accel, 0) and np.allclose(out.orientation, rot) and out.dt == 0.01
    pos = np.outer(0.1 * np.sin(2 * np.pi * t), [0, 0, 1])
    exact = -0.1 * (2 * np.pi) ** 2 * np.sin(2 * np.pi * t)
    big = np.abs(exact) > 0.5
    big[[0, -1]] = False
    assert np.all(np.abs(synthesize_imu(rot, pos).accel[big, 2] - exact[big]) <= 1e-2 * np.abs(exact[big]))
    with pytest.raises(SequenceTooShort):
        synthesize_imu(rot[:2], pos[:2])
