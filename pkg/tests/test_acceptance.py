"""Acceptance criteria 1-10, each reported as a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the per-criterion summary is
printed at the end of the session.
"""
import math

import numpy as np
import pytest
import torch
from scipy.linalg import orthogonal_procrustes
from scipy.spatial.transform import Rotation

from grip.calib import (InsoleCalibrator, RawImuStream, WatchStrapCalibrator, simulate_raw_insole,
                        simulate_raw_watch, synchronize, synthesize_imu, CalibratedImuStream)
from grip.dyn.env import TrackingEnv
from grip.dyn.fall import FallRecoveryConfig, detect_fall, early_termination, recover
from grip.dyn.model import pendulum, single_body, smpl_humanoid
from grip.dyn.observation import GRID_SPACING, HEIGHT_MAP_WIDTH, grid_offsets, sample_height_map
from grip.dyn.reward import (FixtureDiscriminator, RewardConfig, amp_reward, discriminator_loss,
                             discriminator_loss_torch, energy_penalty, imitation_reward, total_reward)
from grip.dyn.sim import Integrator, rest_state, to_sim_state, total_energy
from grip.dyn.terrain import FLAT
from grip.fixtures import _floor_stream, make_motion, make_sequence, shift_stream
from grip.insole import observation_sequence
from grip.kinnet import (FIELDS, HistoryBuffer, KinematicEstimate, StagedKinematicEstimator,
                         StagedKinematicsNet, kin_loss_torch, _estimate_to_tensors)
from grip.metrics import (accel_error, foot_penetration, foot_sliding, mpjpe, mpjre, pa_mpjpe,
                          pel_mpjpe, success_rate, vgrf_error)
from grip.rotmath import (exp_map, finite_diff_accel, geodesic_angle, matrix_from_rot6d,
                          random_rotations, rot6d_from_matrix, rot_x, rot_z, umeyama_align)
from grip.skeleton import IMU_JOINTS, KEY_JOINTS, LEAF_JOINTS
from grip.statediff import STATE_DIFF_WIDTH, SimState, compute_state_difference


def criterion(n):
    def mark(fn):
        fn.criterion = n
        return fn
    return mark


# ---------------------------------------------------------------- helpers --
def smooth_motion(rng, n=600, static=150):
    """Static prefix, then smooth random rotation and translation of one body."""
    t = np.arange(n - static) * 0.01
    w = rng.normal(0.0, 1.0, (3, 3))
    f = rng.uniform(0.2, 1.0, 3)
    onset = (1 - np.cos(np.pi * np.clip(t, 0, 1))) / 2
    rv = 0.5 * sum(np.outer(np.sin(2 * np.pi * f[k] * t) * onset, w[k]) for k in range(3))
    r0 = random_rotations(1, rng)[0]
    rot = np.concatenate([np.tile(r0, (static, 1, 1)), r0 @ exp_map(rv)])
    pos = np.concatenate([np.zeros((static, 3)), 0.2 * np.outer(np.sin(np.pi * t) ** 2, rng.normal(size=3))])
    return rot, pos


def random_sim_state(rng):
    rot = random_rotations(24, rng)
    pos = rng.normal(0.0, 0.5, (24, 3))
    return SimState(pos, rot, rng.normal(size=(24, 3)), rng.normal(size=(24, 3)))


def random_estimate(rng):
    return KinematicEstimate(
        p_leaf=rng.normal(size=(5, 3)), p=rng.normal(size=(24, 3)),
        theta=rot6d_from_matrix(random_rotations(24, rng)), v_key=rng.normal(size=(6, 3)))


# ------------------------------------------------------ 1 calibration trip --
@criterion(1)
def test_c1_watch_strap_round_trip(verdict):
    rng = np.random.default_rng(1)
    worst_rot = worst_acc = 0.0
    for _ in range(100):
        rot, pos = smooth_motion(rng)
        cal = synthesize_imu(rot, pos)
        r_r_g, r_j_s = random_rotations(2, rng)
        raw = simulate_raw_watch(cal, r_r_g, r_j_s)
        f_ori, f_acc = _floor_stream(r_r_g, rng)
        floor = RawImuStream("watch", np.zeros_like(f_acc), f_acc, f_ori)
        out = WatchStrapCalibrator((0, 150), rot[75]).fit(raw, floor=floor).transform(raw)
        worst_rot = max(worst_rot, geodesic_angle(out.orientation, rot).max())
        worst_acc = max(worst_acc, np.abs(out.accel - cal.accel).max())
    verdict(1, "watch/strap 100 motions", worst_rot < 1e-6 and worst_acc < 1e-6,
            f"rot {worst_rot:.2e} rad, acc {worst_acc:.2e} m/s^2")


@criterion(1)
def test_c1_insole_round_trip(verdict):
    rng = np.random.default_rng(2)
    worst = 0.0
    for k in range(100):
        rot, pos = smooth_motion(rng)
        cal = synthesize_imu(rot, pos)
        side = "left" if k % 2 else "right"
        s2j = random_rotations(1, rng)[0]
        raw = simulate_raw_insole(cal, side, s2j)
        out = InsoleCalibrator(side, s2j, rot[149], tpose_frame=149).fit().transform(raw)
        worst = max(worst, np.degrees(geodesic_angle(out.orientation[300:], rot[300:]).max()))
    verdict(1, "insole VQF path after 3 s", worst < 1.0, f"{worst:.3f} deg")


# ------------------------------------------------------------- 2 sync --
def _jump_reference(seed):
    m = make_motion("jump", seed, n_frames=1000)
    return finite_diff_accel(m.root_pos, m.dt)[:, 2]


@criterion(2)
def test_c2_sync_noise_free_and_noisy(verdict):
    exact = within_one = 0
    for k in range(100):
        rng = np.random.default_rng(2000 + k)
        ref = _jump_reference(k)
        off = int(rng.integers(-200, 201))
        shifted = shift_stream(ref, off)
        noise_std = math.sqrt(np.mean(shifted ** 2) / 10 ** (20 / 10))
        noisy = shifted + rng.normal(0.0, noise_std, len(shifted))
        streams = [CalibratedImuStream(np.tile(np.eye(3), (len(ref), 1, 1)),
                                       np.stack([np.zeros_like(a), np.zeros_like(a), a], axis=1))
                   for a in (shifted, noisy)]
        res = synchronize(streams, ref, max_lag=200)
        exact += res.offsets[0] == off
        within_one += abs(res.offsets[1] - off) <= 1
    verdict(2, "planted offsets up to +-200", exact == 100 and within_one == 100,
            f"exact {exact}/100, 20 dB within 1 frame {within_one}/100")


# ------------------------------------------------------------ 3 rot6d --
@criterion(3)
def test_c3_rot6d(verdict):
    rng = np.random.default_rng(3)
    r = Rotation.random(10_000, random_state=4).as_matrix()
    back = matrix_from_rot6d(rot6d_from_matrix(r))
    err = np.abs(back - r).max()
    raw = matrix_from_rot6d(rng.normal(size=(10_000, 6)))
    ortho = np.abs(np.swapaxes(raw, -1, -2) @ raw - np.eye(3)).max()
    det = np.abs(np.linalg.det(raw) - 1).max()
    verdict(3, "1e4 round trips, decoded outputs orthonormal",
            err < 1e-12 and ortho < 1e-12 and det < 1e-12,
            f"round trip {err:.1e}, orthonormality {ortho:.1e}, det {det:.1e}")


# ------------------------------------------------------- 4 procrustes --
@criterion(4)
def test_c4_procrustes(verdict):
    rng = np.random.default_rng(5)
    worst = worst_pa = 0.0
    for _ in range(100):
        src = rng.normal(size=(50, 3))
        r = Rotation.random(random_state=rng).as_matrix()
        t = rng.normal(size=3) * 2
        s = rng.uniform(0.2, 5.0)
        dst = s * src @ r.T + t
        tf = umeyama_align(src, dst)
        worst = max(worst, np.abs(tf.r - r).max(), np.abs(tf.t - t).max(), abs(tf.s - s))
        worst_pa = max(worst_pa, pa_mpjpe(src[None], dst[None]))
    verdict(4, "100 similarity transforms", worst < 1e-9 and worst_pa < 1e-9,
            f"R/t/s {worst:.1e}, pa_mpjpe {worst_pa:.1e} mm")


# ---------------------------------------------------------- 5 rewards --
@criterion(5)
def test_c5_reward_constants(verdict):
    cfg = RewardConfig()
    zero = SimState(np.zeros((24, 3)), np.tile(np.eye(3), (24, 1, 1)), np.zeros((24, 3)), np.zeros((24, 3)))
    torques = np.zeros((23, 3))
    torques[0, 0] = 4.0
    torques[1, 1] = -6.0
    angvel = np.zeros((23, 3))
    angvel[0, 0] = 1.0
    angvel[1, 1] = 1.0
    checks = {
        "amp(0)=ln2": abs(amp_reward(0.0) - math.log(2)),
        "imit(0)=sum w": abs(imitation_reward(zero, zero, cfg) - (cfg.w_p + cfg.w_theta + cfg.w_v + cfg.w_omega)),
        "energy=-0.005": abs(energy_penalty(torques, angvel, cfg, frame_index=10) - (-0.005)),
        "total weights": abs(total_reward(1.0, 2.0, -0.25, cfg).total - (0.5 * 1.0 + 0.5 * 2.0 - 0.25)),
        "L_D(0)=2ln2": abs(discriminator_loss(np.zeros(8), np.zeros(8), np.ones(8),
                                              RewardConfig(lambda_gp=0.0)) - 2 * math.log(2)),
    }
    worst = max(checks.values())
    ok = worst <= 1e-12 and (cfg.w_amp, cfg.w_imit, cfg.alpha) == (0.5, 0.5, 0.0005)
    verdict(5, "reward constants", ok, ", ".join(f"{k} {v:.0e}" for k, v in checks.items()))


# ------------------------------------------------------------- 6 falls --
@criterion(6)
def test_c6_fall_truth_table(verdict):
    cfg = FallRecoveryConfig()
    table = []
    for z in (0.0, 0.29, np.nextafter(0.30, 0), 0.30, 0.31, 1.0):
        for rho in (0.0, 0.5, np.nextafter(0.7, 0), 0.7, 0.71, 1.0):
            table.append(detect_fall(z, rho, cfg) == (z < 0.30 and rho < 0.7))
    verdict(6, "detect_fall truth table at 0.30 m / 0.7", all(table) and cfg.tau_z == 0.30 and cfg.tau_rho == 0.7,
            f"{sum(table)}/{len(table)} cells")


@criterion(6)
def test_c6_recovery_velocity_integral(verdict):
    rng = np.random.default_rng(6)
    cfg = FallRecoveryConfig()
    worst = 0.0
    for _ in range(20):
        buf = HistoryBuffer(cfg.buffer_frames)
        base = np.array([rng.normal(), rng.normal(), 0.9])
        vels = rng.normal(0.0, 1.0, (cfg.buffer_frames, 3))
        for k in range(cfg.buffer_frames):
            est = random_estimate(rng)
            est.v_key[-1] = vels[k]
            buf.push_estimate(k, est, sim_root=base if k == 0 else rng.normal(size=3))
        state, seg = recover(None, buf, cfg, dt=0.01)
        expect = base[:2] + 0.01 * vels.sum(axis=0)[:2]
        worst = max(worst, np.abs(state.root_pos[:2] - expect).max())
        assert len(seg.frames) == cfg.buffer_frames
    verdict(6, "recovery root reset = velocity integral", worst <= 1e-12, f"{worst:.1e} m")


@criterion(6)
def test_c6_early_termination_threshold(verdict):
    cfg = FallRecoveryConfig()
    kin = np.zeros((24, 3))
    at = kin.copy()
    at[5, 0] = 0.25
    above = kin.copy()
    above[5, 0] = np.nextafter(0.25, 1.0)
    ok = (not early_termination(kin, at, cfg)) and early_termination(kin, above, cfg) and cfg.tau_e == 0.25
    verdict(6, "early termination flips exactly past 0.25 m", ok)


# ----------------------------------------------------------- 7 physics --
@criterion(7)
def test_c7_free_fall(verdict):
    model = single_body(with_contacts=False)
    gs = rest_state(model, [0.0, 0.0, 10.0])
    integ = Integrator(model, substeps=1)
    for _ in range(1000):
        gs, _ = integ.step(gs, 1e-3)
    err = abs(gs.root_pos[2] - (10.0 - 0.5 * 9.81 * 1.0 ** 2))
    verdict(7, "free fall over 1 s at dt=1e-3", err < 5e-3, f"{err:.3e} m")


@criterion(7)
@pytest.mark.slow
def test_c7_pendulum_energy(verdict):
    model = pendulum()
    gs = rest_state(model)
    gs.local_rot[1] = rot_x(1.0)
    gs.u[:] = [0.0, 0.0, 0.7]
    integ = Integrator(model, substeps=1)
    e0 = total_energy(model, gs)
    drift = 0.0
    for k in range(10_000):
        gs, _ = integ.step(gs, 1e-3)
        if k % 50 == 0:
            drift = max(drift, abs(total_energy(model, gs) - e0) / abs(e0))
    verdict(7, "pendulum energy drift over 10 s", drift < 0.02, f"{100 * drift:.2f}%")


@criterion(7)
def test_c7_resting_contact(verdict):
    model = single_body(mass=10.0)
    gs = rest_state(model, [0.0, 0.0, 0.1])
    integ = Integrator(model)
    for _ in range(300):
        gs, _ = integ.step(gs, 0.01)
    pen = 0.1 - gs.root_pos[2]
    verdict(7, "resting box penetration", 0.0 <= pen <= 2e-3, f"{1000 * pen:.2f} mm")


@criterion(7)
@pytest.mark.slow
def test_c7_standing_fixture(verdict):
    seq = make_sequence("standing", 0, n_frames=350)
    truth = seq.truth_estimates()
    obs = observation_sequence(seq.orientations, seq.accels, seq.insole)
    assert len(truth) == 500
    env = TrackingEnv()
    roll = env.rollout(truth, obs)
    sr = success_rate([roll])
    verdict(7, "standing fixture 500 frames", sr == 1.0 and len(roll) == 500,
            f"success_rate {sr}, falls {len(roll.fall_frames)}")


# -------------------------------------------------------- 8 state diff --
@criterion(8)
def test_c8_state_difference(verdict):
    rng = np.random.default_rng(8)
    width_ok = compute_state_difference(random_estimate(rng), random_sim_state(rng)).flatten().shape == (222,)
    worst = 0.0
    for _ in range(100):
        kin, sim = random_estimate(rng), random_sim_state(rng)
        w = rng.normal(size=(4, 3))
        q = rot_z(rng.uniform(-np.pi, np.pi))
        kin_r = KinematicEstimate(kin.p_leaf @ q.T, kin.p @ q.T,
                                  rot6d_from_matrix(q @ matrix_from_rot6d(kin.theta)), kin.v_key @ q.T)
        a = compute_state_difference(kin, sim, kin_angvel=w).flatten()
        b = compute_state_difference(kin_r, sim.rotated(q), kin_angvel=w @ q.T).flatten()
        worst = max(worst, np.abs(a - b).max())
    resid = 0.0
    ident = rot6d_from_matrix(np.eye(3))
    for _ in range(20):
        sim = random_sim_state(rng)
        rel = sim.joint_pos - sim.root_pos
        kin = KinematicEstimate(rel[list(LEAF_JOINTS)], rel, rot6d_from_matrix(sim.joint_rot),
                                sim.joint_linvel[list(KEY_JOINTS)])
        d = compute_state_difference(kin, sim, kin_angvel=sim.joint_angvel[list(IMU_JOINTS)])
        resid = max(resid, np.abs(d.d_theta - ident).max(), np.abs(d.d_v).max(),
                    np.abs(d.d_omega).max(), np.abs(d.d_p).max())
    ok = width_ok and STATE_DIFF_WIDTH == 222 and worst < 1e-9 and resid < 1e-12
    verdict(8, "width 222, yaw invariance, zero residual", ok,
            f"yaw {worst:.1e}, residual {resid:.1e}")


# ----------------------------------------------------------- 9 metrics --
def _oracle_mpjpe(p, g):
    total, n = 0.0, 0
    for t in range(p.shape[0]):
        for j in range(p.shape[1]):
            total += math.sqrt(sum((p[t, j, k] - g[t, j, k]) ** 2 for k in range(3)))
            n += 1
    return 1000.0 * total / n


def _oracle_pa(p, g):
    out = []
    for t in range(len(p)):
        a = p[t] - p[t].mean(0)
        b = g[t] - g[t].mean(0)
        r, ssum = orthogonal_procrustes(a, b)
        assert np.linalg.det(r) > 0
        s = ssum / np.sum(a ** 2)
        out.append(s * a @ r + g[t].mean(0))
    return _oracle_mpjpe(np.array(out), g)


def _oracle_mpjre(pr, gr):
    rel = Rotation.from_matrix(np.swapaxes(pr, -1, -2).reshape(-1, 3, 3) @ gr.reshape(-1, 3, 3))
    return math.degrees(float(np.mean(rel.magnitude())))


def _oracle_acc(p, g, dt):
    def acc(x):
        a = [None] * len(x)
        for t in range(1, len(x) - 1):
            a[t] = (x[t + 1] - 2 * x[t] + x[t - 1]) / dt ** 2
        a[0], a[-1] = a[1], a[-2]
        return np.array(a)
    d = acc(p) - acc(g)
    return float(np.mean([np.linalg.norm(d[t, j]) for t in range(len(d)) for j in range(d.shape[1])]))


def _oracle_fs(feet, contact, dt):
    speeds = []
    for t in range(len(feet) - 1):
        for f in range(2):
            if contact[t, f]:
                dx, dy = feet[t + 1, f, :2] - feet[t, f, :2]
                speeds.append(math.hypot(dx, dy) / dt)
    return sum(speeds) / len(speeds) if speeds else 0.0


def _oracle_fp(feet):
    depths = [max(0.0, -feet[t, f, 2]) for t in range(len(feet)) for f in range(2)]
    return 1000.0 * sum(depths) / len(depths)


def _oracle_vgrf(pred, meas):
    per = [math.sqrt(sum((pred[t, f] - meas[t, f]) ** 2 for t in range(len(pred))) / len(pred)) for f in range(2)]
    return sum(per) / 2


@criterion(9)
def test_c9_metric_oracles(verdict):
    worst = 0.0
    hierarchy = True
    for k in range(100):
        rng = np.random.default_rng(900 + k)
        kind = ("standing", "gait", "jump")[k % 3]
        m = make_motion(kind, k, n_frames=30)
        g = m.joint_pos[-40:]
        gr = m.joint_rot[-40:]
        q = Rotation.from_rotvec(rng.normal(0, 0.2, 3)).as_matrix()
        # estimate = scaled, rotated body + joint noise + global root drift
        drift = rng.normal(0, 0.3, 3)
        p = (g - g[:, :1]) @ q.T * rng.uniform(0.9, 1.1) + g[:, :1] + rng.normal(0, 0.02, g.shape) + drift
        pr = gr @ exp_map(rng.normal(0, 0.1, gr.shape[:-1]))
        contact = rng.random((len(g), 2)) < 0.6
        feet = p[:, [7, 8]] - np.array([0, 0, 0.08])
        grf_p, grf_g = rng.uniform(0, 800, (len(g), 2)), rng.uniform(0, 800, (len(g), 2))
        vals = {
            "mpjpe": (mpjpe(p, g), _oracle_mpjpe(p, g)),
            "pel": (pel_mpjpe(p, g), _oracle_mpjpe(p - p[:, :1], g - g[:, :1])),
            "pa": (pa_mpjpe(p, g), _oracle_pa(p, g)),
            "mpjre": (mpjre(pr, gr), _oracle_mpjre(pr, gr)),
            "acc": (accel_error(p, g), _oracle_acc(p, g, 0.01)),
            "fs": (foot_sliding(feet, contact), _oracle_fs(feet, contact, 0.01)),
            "fp": (foot_penetration(feet, FLAT), _oracle_fp(feet)),
            "vgrf": (vgrf_error(grf_p, grf_g), _oracle_vgrf(grf_p, grf_g)),
            "success": (success_rate([True, False, False, False]), 0.75),
        }
        worst = max(worst, max(abs(a - b) for a, b in vals.values()))
        hierarchy &= vals["pa"][0] <= vals["pel"][0] <= vals["mpjpe"][0]
    offs = grid_offsets()
    xs = np.unique(offs[:, 0])
    hmap = sample_height_map(FLAT, np.zeros(3), np.eye(3))
    grid_ok = (np.all(np.diff(xs) == 0.0625) and GRID_SPACING == 0.0625
               and len(offs) == 625 and hmap.size == 625 and HEIGHT_MAP_WIDTH == 625)
    verdict(9, "metrics vs naive oracles, hierarchy, height map grid",
            worst < 1e-9 and hierarchy and grid_ok,
            f"max deviation {worst:.1e}, hierarchy {hierarchy}, grid {grid_ok}")


# ---------------------------------------------------------- 10 learning --
def _fixture_batch(n=50, kind="gait"):
    seq = make_sequence(kind, 0, n_frames=n)
    sl = slice(150, 150 + n)
    obs = observation_sequence(seq.orientations[sl], seq.accels[sl], seq.insole[sl])
    return obs, seq.truth_estimates()[sl]


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


@criterion(10)
def test_c10_kin_loss_gradients(verdict):
    torch.manual_seed(0)
    obs, truth = _fixture_batch(20)
    net = StagedKinematicsNet(obs_width=obs.shape[1], hidden=16)
    x = torch.as_tensor(obs).unsqueeze(0)
    target = {k: v.unsqueeze(0) for k, v in _estimate_to_tensors(truth).items()}

    first = torch.as_tensor(truth[0].flatten()).view(1, -1)

    def loss():
        out, _ = net(x, net.init_hidden(first))
        return kin_loss_torch(out, target)

    net.zero_grad()
    loss().backward()
    rng = np.random.default_rng(10)
    worst = 0.0
    params = [p for p in net.parameters()]
    for _ in range(40):
        p = params[rng.integers(len(params))]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        analytic = float(p.grad[idx])
        eps = 1e-4
        with torch.no_grad():
            old = float(p[idx])
            p[idx] = old + eps
            up = float(loss().detach())
            p[idx] = old - eps
            dn = float(loss().detach())
            p[idx] = old
        numeric = (up - dn) / (2 * eps)
        if abs(numeric) > 1e-7:
            worst = max(worst, _rel(analytic, numeric))
    # gradient with respect to the predictions has a closed form
    pred = {n: torch.randn_like(target[n], dtype=torch.float64).requires_grad_(True) for n in FIELDS}
    kin_loss_torch(pred, target).backward()
    closed = max(float((pred[n].grad - 2 * (pred[n].detach() - target[n]) / target[n].numel()).abs().max()) for n in FIELDS)
    verdict(10, "kin_loss gradients vs central differences", worst < 1e-4 and closed < 1e-12,
            f"max rel {worst:.1e}, closed form {closed:.1e}")


@criterion(10)
def test_c10_discriminator_gradients(verdict):
    disc = FixtureDiscriminator(window=10, hidden=16, seed=3)
    rng = np.random.default_rng(11)
    real = torch.as_tensor(rng.normal(0.0, 0.3, (4, 10, 360)))
    fake = torch.as_tensor(rng.normal(0.0, 0.3, (4, 10, 360)))

    def loss():
        xr = real.clone().requires_grad_(True)
        out = disc(xr)
        (g,) = torch.autograd.grad(out.sum(), xr, create_graph=True)
        gp = g.reshape(4, -1).pow(2).sum(-1)
        return discriminator_loss_torch(disc(xr), disc(fake), gp, 5.0)

    disc.zero_grad()
    loss().backward()
    worst = 0.0
    params = list(disc.parameters())
    for _ in range(30):
        p = params[rng.integers(len(params))]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        analytic = float(p.grad[idx])
        eps = 1e-4
        with torch.no_grad():
            old = float(p[idx])
            p[idx] = old + eps
        up = float(loss().detach())
        with torch.no_grad():
            p[idx] = old - eps
        dn = float(loss().detach())
        with torch.no_grad():
            p[idx] = old
        numeric = (up - dn) / (2 * eps)
        if abs(numeric) > 1e-7:
            worst = max(worst, _rel(analytic, numeric))
    # input gradient used by the penalty, against finite differences of the logit
    x = rng.normal(0.0, 0.3, (1, 10, 360))
    gsq = disc.grad_sq_norms(x)[0]
    num = np.zeros(x.size)
    flat = x.ravel()
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = 1e-6
        num[i] = (disc.logit((flat + e).reshape(x.shape))[0] - disc.logit((flat - e).reshape(x.shape))[0]) / 2e-6
    in_rel = _rel(gsq, float(np.sum(num ** 2)))
    verdict(10, "discriminator gradients vs central differences", worst < 1e-4 and in_rel < 1e-4,
            f"params {worst:.1e}, input {in_rel:.1e}")


@criterion(10)
@pytest.mark.slow
def test_c10_training_reduces_loss(verdict):
    obs, truth = _fixture_batch(50)
    est = StagedKinematicEstimator(hidden=32, n_steps=200, lr=1e-2, seed=0).fit(obs, truth)
    first, last = est.loss_curve_[0], est.loss_curve_[-1]
    verdict(10, "200 steps on a 50-frame fixture", last <= 0.1 * first,
            f"{first:.3f} -> {last:.4f} ({100 * (1 - last / first):.1f}% reduction)")
