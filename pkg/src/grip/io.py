"""Line-delimited JSON file formats.

Every file starts with a header line carrying ``format`` and ``version``,
followed by one record per frame. Floats are written with Python's shortest
round-trip repr, so write -> read -> write is byte-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_rotations
from .exceptions import GripError
from .insole import CANONICAL_DEVICES
from .kinnet import ESTIMATE_WIDTH, KinematicEstimate
from .metrics import MotionSequence
from .rotmath import DT

FRAME_RATE = 100
SEQUENCE_FORMAT = "grip-sequence"
RAW_FORMAT = "grip-raw"
ESTIMATE_FORMAT = "grip-estimate"
ROLLOUT_FORMAT = "grip-rollout"
OFFSETS_FORMAT = "grip-offsets"
VERSION = 1


class FormatError(GripError, ValueError):
    """File does not follow the expected layout."""


def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def dumps_jsonl(header, records):
    lines = [json.dumps(_plain(header))]
    lines.extend(json.dumps(_plain(r)) for r in records)
    return "\n".join(lines) + "\n"


def loads_jsonl(text, expect_format=None):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty file")
    try:
        header = json.loads(lines[0])
        records = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed line: {exc}") from exc
    if not isinstance(header, dict) or "format" not in header:
        raise FormatError("missing header")
    if expect_format is not None and header["format"] != expect_format:
        raise FormatError(f"expected a {expect_format} file, got {header['format']}")
    if header.get("version") != VERSION:
        raise FormatError(f"unsupported version {header.get('version')}")
    return header, records


def write_text(path, text):
    Path(path).write_text(text)


def read_text(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return p.read_text()


def _check_frames(records):
    frames = [r.get("frame") for r in records]
    if any(not isinstance(f, int) for f in frames):
        raise FormatError("every record needs an integer frame index")
    if any(b <= a for a, b in zip(frames, frames[1:])):
        raise FormatError("frame indices must increase")
    return np.array(frames, dtype=int)


# ----------------------------------------------------------------- sequence --
@dataclass
class SequenceData:
    """Calibrated IMUs, insole features and optional ground truth."""

    devices: tuple
    orientations: np.ndarray  # (T, D, 3, 3)
    accels: np.ndarray  # (T, D, 3)
    insole: np.ndarray  # (T, 2, 5)
    frames: np.ndarray | None = None
    truth: MotionSequence | None = None
    subject: str = "fixture"
    terrain: str | None = None
    pressure: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.frames is None:
            self.frames = np.arange(len(self.accels))

    def __len__(self):
        return len(self.accels)

    def device_index(self, names):
        missing = [n for n in names if n not in self.devices]
        if missing:
            raise FormatError(f"sequence lacks devices {missing}")
        return [self.devices.index(n) for n in names]


def sequence_to_text(seq):
    header = {
        "format": SEQUENCE_FORMAT, "version": VERSION, "subject": seq.subject,
        "frame_rate": FRAME_RATE, "gravity_free": True, "devices": list(seq.devices),
        "pressure": bool(seq.pressure), "has_truth": seq.truth is not None,
        "terrain": seq.terrain, "meta": seq.meta,
    }
    records = []
    for t in range(len(seq)):
        rec = {
            "frame": int(seq.frames[t]),
            "R": seq.orientations[t].reshape(-1, 9),
            "a": seq.accels[t],
            "insole": seq.insole[t],
        }
        if seq.truth is not None:
            tr = seq.truth
            rec["truth"] = {
                "joint_pos": tr.joint_pos[t],
                "joint_rot": tr.joint_rot[t].reshape(-1, 9),
                "contact": tr.contact[t] if tr.contact is not None else None,
                "grf": tr.grf[t] if tr.grf is not None else None,
            }
        records.append(rec)
    return dumps_jsonl(header, records)


def sequence_from_text(text):
    header, records = loads_jsonl(text, SEQUENCE_FORMAT)
    if header.get("frame_rate") != FRAME_RATE:
        raise FormatError(f"frame rate must be {FRAME_RATE} Hz")
    if not records:
        raise FormatError("sequence has no frames")
    frames = _check_frames(records)
    devices = tuple(header["devices"])
    try:
        ori = np.array([r["R"] for r in records], dtype=np.float64).reshape(len(records), len(devices), 3, 3)
        acc = np.array([r["a"] for r in records], dtype=np.float64).reshape(len(records), len(devices), 3)
        ins = np.array([r["insole"] for r in records], dtype=np.float64).reshape(len(records), 2, 5)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad sequence record: {exc}") from exc
    check_rotations(ori, "imu orientation", atol=1e-6)
    truth = None
    if header.get("has_truth"):
        tr = [r["truth"] for r in records]
        rot = np.array([x["joint_rot"] for x in tr], dtype=np.float64).reshape(len(tr), 24, 3, 3)
        check_rotations(rot, "truth rotation", atol=1e-6)
        contact = None if tr[0]["contact"] is None else np.array([x["contact"] for x in tr], dtype=np.float64)
        grf = None if tr[0]["grf"] is None else np.array([x["grf"] for x in tr], dtype=np.float64)
        truth = MotionSequence(np.array([x["joint_pos"] for x in tr], dtype=np.float64), rot, contact, grf, DT)
    return SequenceData(devices, ori, acc, ins, frames, truth, header.get("subject", ""),
                        header.get("terrain"), bool(header.get("pressure", True)), header.get("meta", {}))


def save_sequence(seq, path):
    write_text(path, sequence_to_text(seq))


def load_sequence(path):
    return sequence_from_text(read_text(path))


# ----------------------------------------------------------------- raw data --
def raw_to_text(bundle, subject="fixture"):
    """Serialise a :class:`grip.fixtures.RawBundle`."""
    devs = []
    for d in bundle.devices:
        devs.append({
            "name": d.name, "kind": d.kind,
            "tpose_joint_global": d.tpose_joint_global.reshape(9),
            "sensor_to_joint": None if d.sensor_to_joint is None else d.sensor_to_joint.reshape(9),
            "floor": None if d.floor_orientation is None else {
                "R": d.floor_orientation.reshape(-1, 9), "a": d.floor_accel},
        })
    header = {"format": RAW_FORMAT, "version": VERSION, "subject": subject, "frame_rate": FRAME_RATE,
              "tpose_window": list(bundle.tpose_window) if bundle.tpose_window else None,
              "devices": devs}
    m = bundle.motion
    records = []
    for t in range(len(m)):
        records.append({
            "frame": t,
            "gyro": [d.gyro[t] for d in bundle.devices],
            "accel": [d.accel[t] for d in bundle.devices],
            "R": [None if d.orientation is None else d.orientation[t].reshape(9) for d in bundle.devices],
            "cells": bundle.cells[t],
            "truth": {"joint_pos": m.joint_pos[t], "joint_rot": m.joint_rot[t].reshape(-1, 9)},
        })
    return dumps_jsonl(header, records)


@dataclass
class RawData:
    header: dict
    devices: list  # dicts with name, kind, gyro, accel, orientation, and static info
    cells: np.ndarray
    truth_pos: np.ndarray | None
    truth_rot: np.ndarray | None
    frames: np.ndarray


def raw_from_text(text):
    header, records = loads_jsonl(text, RAW_FORMAT)
    if header.get("frame_rate") != FRAME_RATE:
        raise FormatError(f"frame rate must be {FRAME_RATE} Hz")
    if not records:
        raise FormatError("raw file has no frames")
    frames = _check_frames(records)
    devs = []
    for k, spec in enumerate(header["devices"]):
        d = dict(spec)
        d["gyro"] = np.array([r["gyro"][k] for r in records], dtype=np.float64)
        d["accel"] = np.array([r["accel"][k] for r in records], dtype=np.float64)
        ori = [r["R"][k] for r in records]
        d["orientation"] = None if ori[0] is None else np.array(ori, dtype=np.float64).reshape(-1, 3, 3)
        d["tpose_joint_global"] = np.array(spec["tpose_joint_global"], dtype=np.float64).reshape(3, 3)
        if spec.get("sensor_to_joint") is not None:
            d["sensor_to_joint"] = np.array(spec["sensor_to_joint"], dtype=np.float64).reshape(3, 3)
        if spec.get("floor") is not None:
            d["floor"] = {"R": np.array(spec["floor"]["R"], dtype=np.float64).reshape(-1, 3, 3),
                          "a": np.array(spec["floor"]["a"], dtype=np.float64)}
        devs.append(d)
    cells = np.array([r["cells"] for r in records], dtype=np.float64)
    has_truth = "truth" in records[0]
    pos = np.array([r["truth"]["joint_pos"] for r in records], dtype=np.float64) if has_truth else None
    rot = (np.array([r["truth"]["joint_rot"] for r in records], dtype=np.float64).reshape(-1, 24, 3, 3)
           if has_truth else None)
    return RawData(header, devs, cells, pos, rot, frames)


def load_raw(path):
    return raw_from_text(read_text(path))


# ---------------------------------------------------------------- estimates --
def estimate_to_text(est, source="oracle"):
    flat = est.flatten().reshape(-1, ESTIMATE_WIDTH)
    header = {"format": ESTIMATE_FORMAT, "version": VERSION, "source": source,
              "fields": ["p_leaf", "p", "theta", "v_key"], "width": ESTIMATE_WIDTH}
    return dumps_jsonl(header, [{"frame": t, "x": flat[t]} for t in range(len(flat))])


def estimate_from_text(text):
    header, records = loads_jsonl(text, ESTIMATE_FORMAT)
    _check_frames(records)
    if any(len(r.get("x", ())) != ESTIMATE_WIDTH for r in records):
        raise FormatError(f"estimate records must have {ESTIMATE_WIDTH} values")
    flat = np.array([r["x"] for r in records], dtype=np.float64).reshape(-1, ESTIMATE_WIDTH)
    return KinematicEstimate.from_flat(flat), header


def load_estimate(path):
    return estimate_from_text(read_text(path))[0]


# ----------------------------------------------------------------- rollouts --
def rollout_to_text(roll, meta=None):
    header = {"format": ROLLOUT_FORMAT, "version": VERSION, "n_frames": len(roll),
              "fall_frames": list(roll.fall_frames),
              "recoveries": [list(r) for r in roll.recoveries],
              "terminations": list(roll.terminations), "meta": meta or {}}
    records = [{
        "frame": t,
        "joint_pos": roll.joint_pos[t],
        "joint_rot": roll.joint_rot[t].reshape(-1, 9),
        "foot_force": roll.foot_force[t],
        "reward": roll.rewards[t],
    } for t in range(len(roll))]
    return dumps_jsonl(header, records)


def rollout_from_text(text):
    from .dyn.env import Rollout

    header, records = loads_jsonl(text, ROLLOUT_FORMAT)
    _check_frames(records)
    pos = np.array([r["joint_pos"] for r in records], dtype=np.float64)
    rot = np.array([r["joint_rot"] for r in records], dtype=np.float64).reshape(-1, 24, 3, 3)
    check_rotations(rot, "rollout rotation", atol=1e-6)
    feet = np.array([r["foot_force"] for r in records], dtype=np.float64)
    rew = np.array([r["reward"] for r in records], dtype=np.float64)
    roll = Rollout(pos, rot, feet, rew, list(header["fall_frames"]),
                   [tuple(x) for x in header["recoveries"]], list(header["terminations"]))
    return roll, header


def load_rollout(path):
    return rollout_from_text(read_text(path))[0]


def file_format(path):
    """Format tag of a grip file, read from its header line."""
    with open(path) as fh:
        first = fh.readline()
    try:
        return json.loads(first).get("format")
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a grip file") from exc


def canonical_devices():
    return CANONICAL_DEVICES
