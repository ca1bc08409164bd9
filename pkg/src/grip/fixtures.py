"""Deterministic synthetic motions with full ground truth.

Every motion opens with a static T-pose so calibration windows exist, and
sensor streams are synthesised from the motion labels the same way the
training data for pressure-only datasets is.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calib import (CalibratedImuStream, simulate_raw_insole, simulate_raw_watch,
                    synthesize_imu)
from .insole import ALL_DEVICES, N_CELLS, extract_features, default_profile
from .kinnet import kinematic_targets
from .rotmath import DT, GRAVITY, exp_map, random_rotations, rot_x, rot_z
from .skeleton import FOOT_JOINTS, N_JOINTS, STANDING_ROOT_HEIGHT, forward_kinematics

KINDS = ("standing", "gait", "jump")
TPOSE_FRAMES = 150
FLOOR_FRAMES = 200
DEVICE_JOINTS = {"l_wrist": 20, "r_wrist": 21, "l_foot": 7, "r_foot": 8, "pelvis": 0, "head": 15}
DEVICE_KIND = {"l_wrist": "watch", "r_wrist": "watch", "l_foot": "insole_left",
               "r_foot": "insole_right", "pelvis": "strap", "head": "strap"}
SUBJECT_MASS = 70.0
CONTACT_HEIGHT = 0.09  # ankle height below which a foot is loaded


@dataclass
class Motion:
    kind: str
    seed: int
    local_rot: np.ndarray
    root_pos: np.ndarray
    joint_pos: np.ndarray
    joint_rot: np.ndarray
    dt: float = DT

    def __len__(self):
        return len(self.root_pos)


def _static_then(n_motion, fn, rng):
    """T-pose prefix followed by ``fn(t, rng)`` evaluated on the motion frames."""
    local = np.tile(np.eye(3), (TPOSE_FRAMES + n_motion, N_JOINTS, 1, 1))
    root = np.tile([0.0, 0.0, STANDING_ROOT_HEIGHT], (TPOSE_FRAMES + n_motion, 1))
    t = np.arange(n_motion) * DT
    fn(t, rng, local[TPOSE_FRAMES:], root[TPOSE_FRAMES:])
    return local, root


def _ramp(t, seconds=0.5):
    """Smooth 0 -> 1 onset so motions leave the T-pose without a velocity jump."""
    x = np.clip(t / seconds, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def _standing(t, rng, local, root):
    amp = rng.uniform(0.02, 0.05, size=3)
    freq = rng.uniform(0.2, 0.5, size=3)
    env = _ramp(t)
    for j, a, f in zip((16, 17, 3), amp, freq):
        local[:, j] = exp_map(np.outer(env * a * np.sin(2 * np.pi * f * t), [1.0, 0.0, 0.0]))


def _gait(t, rng, local, root):
    f = rng.uniform(0.8, 1.0)
    speed = rng.uniform(0.8, 1.2)
    env = _ramp(t)
    phase = 2 * np.pi * f * t
    hip = 0.35 * env * np.sin(phase)
    knee_l = 0.5 * env * np.maximum(0.0, np.sin(phase + np.pi / 2))
    knee_r = 0.5 * env * np.maximum(0.0, np.sin(phase - np.pi / 2))
    local[:, 1] = rot_x(hip)
    local[:, 2] = rot_x(-hip)
    local[:, 4] = rot_x(-knee_l)
    local[:, 5] = rot_x(-knee_r)
    local[:, 16] = rot_x(-0.4 * env * np.sin(phase))
    local[:, 17] = rot_x(0.4 * env * np.sin(phase))
    heading = 0.1 * env * np.sin(0.5 * phase)
    local[:, 0] = rot_z(heading)
    ramp_dist = np.cumsum(env) * DT * speed
    root[:, 1] += ramp_dist
    root[:, 2] += 0.02 * env * np.cos(2 * phase)


def _jump(t, rng, local, root):
    """Three vertical jumps as Gaussian lifts of the root, 1.2 s to 1.6 s apart."""
    gaps = rng.uniform(1.2, 1.6, size=3)
    centres = 1.0 + np.cumsum(gaps) - gaps[0]
    height = rng.uniform(0.15, 0.25)
    width = 0.08
    lift = sum(height * np.exp(-0.5 * ((t - c) / width) ** 2) for c in centres)
    root[:, 2] += lift
    for j in (16, 17):
        local[:, j] = rot_x(-1.5 * lift)


_MOTION_FN = {"standing": _standing, "gait": _gait, "jump": _jump}
_DEFAULT_FRAMES = {"standing": 500, "gait": 600, "jump": 600}


def make_motion(kind="standing", seed=0, n_frames=None):
    """Motion of ``kind`` with ``n_frames`` frames after the T-pose prefix."""
    if kind not in KINDS:
        raise ValueError(f"unknown fixture kind {kind!r}; choose from {KINDS}")
    rng = np.random.default_rng(seed)
    n = _DEFAULT_FRAMES[kind] if n_frames is None else int(n_frames)
    local, root = _static_then(n, _MOTION_FN[kind], rng)
    rot, pos = forward_kinematics(local, root)
    return Motion(kind, seed, local, root, pos, rot)


# ------------------------------------------------------------------ sensors --
def contact_and_grf(motion, mass=SUBJECT_MASS):
    """Foot contact bits (T, 2, 2) and a static-share vertical GRF (T, 2)."""
    ankle_z = motion.joint_pos[:, list(FOOT_JOINTS), 2]
    loaded = ankle_z < CONTACT_HEIGHT
    n_loaded = loaded.sum(axis=1, keepdims=True)
    acc_z = np.gradient(np.gradient(motion.root_pos[:, 2], DT), DT)
    total = np.maximum(0.0, mass * (-GRAVITY[2] + acc_z))[:, None]
    grf = np.where(loaded, total / np.maximum(n_loaded, 1), 0.0)
    contact = np.repeat(loaded[..., None], 2, axis=-1).astype(np.float64)
    return contact, grf


def pressure_cells(grf, profile=None):
    """Spread each foot's load evenly over its 16 cells."""
    return np.repeat(np.asarray(grf)[..., None] / N_CELLS, N_CELLS, axis=-1)


def synthetic_imus(motion, devices=ALL_DEVICES[:4]):
    return {d: synthesize_imu(motion.joint_rot[:, DEVICE_JOINTS[d]],
                              motion.joint_pos[:, DEVICE_JOINTS[d]], motion.dt) for d in devices}


@dataclass
class FixtureSequence:
    """Calibrated sensor data plus ground truth for one motion."""

    motion: Motion
    devices: tuple
    orientations: np.ndarray  # (T, D, 3, 3)
    accels: np.ndarray  # (T, D, 3)
    insole: np.ndarray  # (T, 2, 5)
    contact: np.ndarray  # (T, 2, 2)
    grf: np.ndarray  # (T, 2)

    def truth_estimates(self):
        return kinematic_targets(self.motion.joint_pos, self.motion.joint_rot, self.motion.dt)


def make_sequence(kind="standing", seed=0, n_frames=None, devices=ALL_DEVICES[:4]):
    motion = make_motion(kind, seed, n_frames)
    imus = synthetic_imus(motion, devices)
    contact, grf = contact_and_grf(motion)
    profile = default_profile()
    cells = pressure_cells(grf, profile)
    insole = np.stack([extract_features(c, profile).as_array() for c in cells])
    ori = np.stack([imus[d].orientation for d in devices], axis=1)
    acc = np.stack([imus[d].accel for d in devices], axis=1)
    return FixtureSequence(motion, tuple(devices), ori, acc, insole, contact, grf)


# -------------------------------------------------------------- raw bundles --
@dataclass
class RawDevice:
    name: str
    kind: str
    gyro: np.ndarray
    accel: np.ndarray
    orientation: np.ndarray | None
    tpose_joint_global: np.ndarray
    ref_frame_r_to_g: np.ndarray | None = None  # truth, kept for tests
    joint_to_sensor: np.ndarray | None = None
    sensor_to_joint: np.ndarray | None = None
    floor_orientation: np.ndarray | None = None
    floor_accel: np.ndarray | None = None


@dataclass
class RawBundle:
    motion: Motion
    devices: list
    cells: np.ndarray  # (T, 2, 16)
    tpose_window: tuple = (0, TPOSE_FRAMES)


def _floor_stream(r_r_g, rng, n=FLOOR_FRAMES, noise=0.0):
    """Device lying aligned with the global axes: orientation R_g_r, gravity-only accel."""
    ori = np.tile(r_r_g.T, (n, 1, 1))
    acc = np.tile(-GRAVITY, (n, 1)) + (rng.normal(0.0, noise, (n, 3)) if noise else 0.0)
    return ori, acc


def make_raw_bundle(kind="standing", seed=0, n_frames=None, devices=ALL_DEVICES[:4]):
    """Raw device streams that the calibration path maps back to the motion."""
    motion = make_motion(kind, seed, n_frames)
    rng = np.random.default_rng(seed + 7919)
    imus = synthetic_imus(motion, devices)
    raw = []
    for d in devices:
        cal = imus[d]
        j_rot_t = motion.joint_rot[TPOSE_FRAMES // 2, DEVICE_JOINTS[d]]
        kind_d = DEVICE_KIND[d]
        if kind_d.startswith("insole"):
            side = "left" if kind_d == "insole_left" else "right"
            s2j = random_rotations(1, rng)[0]
            r = simulate_raw_insole(cal, side, s2j)
            raw.append(RawDevice(d, kind_d, r.gyro, r.accel, None, j_rot_t, sensor_to_joint=s2j))
        else:
            r_r_g, r_j_s = random_rotations(2, rng)
            r = simulate_raw_watch(cal, r_r_g, r_j_s, kind_d)
            f_ori, f_acc = _floor_stream(r_r_g, rng)
            raw.append(RawDevice(d, kind_d, r.gyro, r.accel, r.orientation, j_rot_t,
                                 ref_frame_r_to_g=r_r_g, joint_to_sensor=r_j_s,
                                 floor_orientation=f_ori, floor_accel=f_acc))
    _, grf = contact_and_grf(motion)
    return RawBundle(motion, raw, pressure_cells(grf))


def shift_stream(x, offset):
    """Delay ``x`` by ``offset`` samples (negative advances), replicating the edges."""
    x = np.asarray(x)
    idx = np.clip(np.arange(len(x)) - int(offset), 0, len(x) - 1)
    return x[idx]


def plant_offsets(seq, offsets):
    """Copy of a fixture sequence whose device streams lag the motion by ``offsets``."""
    if len(offsets) != len(seq.devices):
        raise ValueError("one offset per device required")
    ori = seq.orientations.copy()
    acc = seq.accels.copy()
    for k, o in enumerate(offsets):
        ori[:, k] = shift_stream(seq.orientations[:, k], o)
        acc[:, k] = shift_stream(seq.accels[:, k], o)
    return FixtureSequence(seq.motion, seq.devices, ori, acc, seq.insole, seq.contact, seq.grf)


def reference_vertical_accel(motion, devices):
    """MoCap-side vertical accelerations at each device's attachment joint."""
    from .rotmath import finite_diff_accel

    return [finite_diff_accel(motion.joint_pos[:, DEVICE_JOINTS[d]], motion.dt)[:, 2] for d in devices]


def calibrated_streams(seq):
    return [CalibratedImuStream(seq.orientations[:, k], seq.accels[:, k], seq.motion.dt)
            for k in range(len(seq.devices))]
