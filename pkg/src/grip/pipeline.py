"""End-to-end stages behind the command-line tools.

Each function maps in-memory inputs to in-memory outputs; the CLI only adds
file handling and exit codes.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .calib import (CalibratedImuStream, InsoleCalibrator, RawImuStream, WatchStrapCalibrator,
                    synchronize)
from .config import PipelineConfig
from .exceptions import FlatSignal, LayoutMismatch, MissingContext, MissingTpose
from .fixtures import DEVICE_JOINTS, make_raw_bundle, make_sequence, plant_offsets
from .insole import SensorObservation, default_profile, extract_features, observation_sequence
from .io import FormatError, SequenceData
from .kinnet import KinematicEstimate, OracleEstimator, StagedKinematicEstimator, kinematic_targets
from .metrics import MotionSequence, evaluate
from .rotmath import DT, finite_diff_accel, matrix_from_rot6d


# ------------------------------------------------------------------ fixture --
def fixture_sequence(kind, cfg=PipelineConfig(), n_frames=None, offsets=None):
    seq = make_sequence(kind, cfg.seed, n_frames, devices=cfg.devices)
    if offsets is not None:
        seq = plant_offsets(seq, offsets)
    truth = MotionSequence(seq.motion.joint_pos, seq.motion.joint_rot, seq.contact, seq.grf)
    meta = {"kind": kind, "seed": cfg.seed}
    if offsets is not None:
        meta["planted_offsets"] = [int(o) for o in offsets]
    return SequenceData(seq.devices, seq.orientations, seq.accels, seq.insole, truth=truth,
                        subject=f"fixture-{kind}-{cfg.seed}", pressure=cfg.pressure, meta=meta)


def fixture_raw(kind, cfg=PipelineConfig(), n_frames=None):
    return make_raw_bundle(kind, cfg.seed, n_frames, devices=cfg.devices)


# ---------------------------------------------------------------- calibrate --
def calibrate_raw(raw, cfg=PipelineConfig()):
    """Calibrated :class:`SequenceData` from a parsed raw file."""
    window = raw.header.get("tpose_window")
    if not window:
        raise MissingContext("raw bundle has no T-pose window")
    window = (int(window[0]), int(window[1]))
    ori, acc, names = [], [], []
    for d in raw.devices:
        kind = d["kind"]
        if kind.startswith("insole"):
            side = "left" if kind == "insole_left" else "right"
            if d.get("tpose_joint_global") is None:
                raise MissingTpose(f"{d['name']}: no T-pose joint rotation")
            stream = RawImuStream(kind, d["gyro"], d["accel"])
            cal = InsoleCalibrator(side, d.get("sensor_to_joint"), d["tpose_joint_global"],
                                   tpose_frame=window[1] - 1, tau_acc=cfg.calib.tau_acc)
            out = cal.fit().transform(stream)
        else:
            floor = d.get("floor")
            if floor is None:
                raise MissingContext(f"{d['name']}: no floor placement for the reference frame")
            stream = RawImuStream(kind, d["gyro"], d["accel"], d["orientation"])
            floor_stream = RawImuStream(kind, np.zeros_like(floor["a"]), floor["a"], floor["R"])
            cal = WatchStrapCalibrator(window, d["tpose_joint_global"],
                                       static_bound=cfg.calib.static_variance_bound)
            out = cal.fit(stream, floor=floor_stream).transform(stream)
        names.append(d["name"])
        ori.append(out.orientation)
        acc.append(out.accel)
    profile = default_profile()
    feats = [extract_features(c, profile, cfg.insole.contact_threshold, cfg.insole.cop_min_force)
             for c in raw.cells]
    insole = np.stack([f.as_array() for f in feats])
    truth = None
    if raw.truth_pos is not None:
        contact = np.stack([f.contact for f in feats])
        grf = np.stack([f.grf for f in feats])
        truth = MotionSequence(raw.truth_pos, raw.truth_rot, contact, grf)
    return SequenceData(tuple(names), np.stack(ori, axis=1), np.stack(acc, axis=1), insole,
                        np.arange(len(insole)), truth, raw.header.get("subject", ""),
                        pressure=True)


# --------------------------------------------------------------------- sync --
@dataclass
class OffsetsReport:
    devices: list
    offsets: list  # None for streams that could not be correlated
    window: tuple | None
    flat: list

    def to_dict(self):
        return {"format": "grip-offsets", "version": 1, "devices": self.devices,
                "offsets": self.offsets, "window": None if self.window is None else list(self.window),
                "flat": self.flat}


def reference_accels(seq):
    """MoCap vertical accelerations at the attachment joints of every device."""
    if seq.truth is None:
        raise MissingContext("synchronisation needs MoCap ground truth")
    return [finite_diff_accel(seq.truth.joint_pos[:, DEVICE_JOINTS[d]], DT)[:, 2] for d in seq.devices]


def sync_sequence(seq, cfg=PipelineConfig()):
    """Offsets of each device stream against the MoCap reference.

    Flat streams are reported with a warning and excluded from the common
    window; :class:`FlatSignal` is raised only if no stream is usable.
    """
    refs = reference_accels(seq)
    streams = [CalibratedImuStream(seq.orientations[:, k], seq.accels[:, k]) for k in range(len(seq.devices))]
    usable, flat = [], []
    for k, name in enumerate(seq.devices):
        if np.var(streams[k].accel[:, 2]) < 1e-12:
            warnings.warn(f"{name}: vertical acceleration is flat; cannot synchronise", stacklevel=2)
            flat.append(name)
        else:
            usable.append(k)
    if not usable:
        raise FlatSignal("every stream is flat")
    res = synchronize([streams[k] for k in usable], [refs[k] for k in usable], cfg.calib.sync_max_lag)
    offsets = [None] * len(seq.devices)
    for k, o in zip(usable, res.offsets):
        offsets[k] = int(o)
    return OffsetsReport(list(seq.devices), offsets, res.window, flat), res, usable


def apply_sync(seq, res, usable):
    """Sequence restricted to the usable devices and trimmed to the common window."""
    a, b = res.window
    ori = np.stack([s.orientation for s in res.streams], axis=1)
    acc = np.stack([s.accel for s in res.streams], axis=1)
    truth = seq.truth.segment(a, b) if seq.truth is not None else None
    return SequenceData(tuple(seq.devices[k] for k in usable), ori, acc, seq.insole[a:b],
                        np.arange(b - a), truth, seq.subject, seq.terrain, seq.pressure, dict(seq.meta))


# ----------------------------------------------------------------- estimate --
def select_devices(seq, cfg):
    idx = seq.device_index(cfg.devices)
    return seq.orientations[:, idx], seq.accels[:, idx]


def sensor_matrix(seq, cfg=PipelineConfig()):
    ori, acc = select_devices(seq, cfg)
    return observation_sequence(ori, acc, seq.insole, pressure=cfg.pressure and seq.pressure)


def sensor_observations(seq, cfg=PipelineConfig()):
    ori, acc = select_devices(seq, cfg)
    ins = seq.insole if (cfg.pressure and seq.pressure) else np.zeros_like(seq.insole)
    return [SensorObservation(ori[t], acc[t], ins[t], cfg.devices) for t in range(len(seq))]


def truth_estimates(seq):
    if seq.truth is None:
        raise MissingContext("oracle estimation needs ground truth in the sequence")
    return kinematic_targets(seq.truth.joint_pos, seq.truth.joint_rot, seq.truth.dt)


def estimate_sequence(seq, cfg=PipelineConfig(), checkpoint=None):
    """Oracle estimates (``checkpoint`` None) or the network's causal predictions."""
    if checkpoint is None:
        noise = cfg.kinnet.oracle_noise
        std = {n: noise for n in ("p_leaf", "p", "theta", "v_key")} if noise > 0 else None
        return OracleEstimator(truth_estimates(seq), std, cfg.seed).predict()
    x = sensor_matrix(seq, cfg)
    if checkpoint.obs_width != x.shape[1]:
        raise LayoutMismatch(f"checkpoint expects {checkpoint.obs_width} sensor values, "
                             f"configuration gives {x.shape[1]}")
    est = StagedKinematicEstimator(hidden=checkpoint.hidden, init_from_truth=False)
    est.net_ = checkpoint
    est.n_features_in_ = x.shape[1]
    return est.predict(x)


# ----------------------------------------------------------------- simulate --
def simulate_sequence(seq, est, cfg=PipelineConfig(), model=None, terrain=None, policy="fixture"):
    from .dyn.env import TrackingEnv, fixture_policy, passive_policy
    from .dyn.terrain import FLAT

    if len(est) != len(seq):
        raise LayoutMismatch(f"estimate has {len(est)} frames, sequence {len(seq)}")
    policies = {"fixture": fixture_policy, "passive": passive_policy}
    if policy not in policies:
        raise ValueError(f"unknown policy {policy!r}")
    env = TrackingEnv(model or cfg.humanoid(), terrain or FLAT, cfg.mask, cfg.reward_config(),
                      cfg.fall_config(), substeps=cfg.dyn.substeps)
    root_xy = (0.0, 0.0) if seq.truth is None else tuple(seq.truth.joint_pos[0, 0, :2])
    return env.rollout([est[t] for t in range(len(est))], sensor_observations(seq, cfg),
                       policies[policy], root_xy)


# ----------------------------------------------------------------- evaluate --
def prediction_from_estimate(est, gt):
    """Estimated pose placed at the ground-truth root (estimates carry no global root)."""
    rot = matrix_from_rot6d(est.theta)
    pos = est.p + gt.joint_pos[:, :1]
    return MotionSequence(pos, rot, None, None, gt.dt)


def evaluate_prediction(pred, gt_seq, terrain=None, cfg=PipelineConfig(), rollouts=None):
    from .dyn.terrain import FLAT

    if gt_seq.truth is None:
        raise MissingContext("ground-truth sequence lacks truth records")
    gt = gt_seq.truth
    if isinstance(pred, KinematicEstimate):
        pred = prediction_from_estimate(pred, gt)
    elif isinstance(pred, SequenceData):
        if pred.truth is None:
            raise FormatError("prediction sequence has no poses")
        pred = pred.truth
    elif not isinstance(pred, MotionSequence):
        pred = MotionSequence(pred.joint_pos, pred.joint_rot, None, pred.foot_force, gt.dt)
    return evaluate(pred, gt, terrain or FLAT, cfg.segment_frames, rollouts)
