"""Pose, smoothness, contact and force metrics over fixed-length segments.

Position metrics are reported in millimetres, rotations in degrees. Every
metric averages over the pooled frames of one segment; a dataset number is
the mean over its segments.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._validation import check_trailing_shape
from .exceptions import EmptySet, LengthMismatch
from .rotmath import DT, finite_diff_accel, geodesic_angle
from .skeleton import FOOT_JOINTS, ROOT

SEGMENT_FRAMES = 500
MIN_SEGMENT_FRAMES = 3
# sole centre in the ankle frame, used for penetration
SOLE_OFFSET = np.array([0.0, 0.03, -0.07])

REPORT_FORMAT = "grip-report"
REPORT_VERSION = 1
REPORT_HEADERS = {
    "mpjpe": ("MPJPE", "mm"),
    "pel_mpjpe": ("PEL-MPJPE", "mm"),
    "pa_mpjpe": ("PA-MPJPE", "mm"),
    "mpjre": ("MPJRE", "deg"),
    "acc": ("Acc", "m/s^2"),
    "fs": ("FS", "m/s"),
    "fp": ("FP", "mm"),
    "vgrf": ("vGRF", "N"),
    "success_rate": ("Success Rate", "fraction"),
}


def _pair(pred, gt, trailing=(3,)):
    pred = check_trailing_shape(pred, trailing, "pred")
    gt = check_trailing_shape(gt, trailing, "gt")
    if pred.shape != gt.shape:
        raise LengthMismatch(f"pred {pred.shape} and gt {gt.shape} differ")
    return pred, gt


def mpjpe(pred, gt):
    pred, gt = _pair(pred, gt)
    return 1000.0 * float(np.mean(np.linalg.norm(pred - gt, axis=-1)))


def pel_mpjpe(pred, gt, root=ROOT):
    pred, gt = _pair(pred, gt)
    return mpjpe(pred - pred[..., root:root + 1, :], gt - gt[..., root:root + 1, :])


def similarity_align(src, dst):
    """Batched least-squares similarity (Umeyama) mapping ``src`` onto ``dst``.

    ``src`` and ``dst`` are (..., J, 3); returns the aligned ``src``.
    """
    mu_s = src.mean(axis=-2, keepdims=True)
    mu_d = dst.mean(axis=-2, keepdims=True)
    xs = src - mu_s
    xd = dst - mu_d
    cov = np.swapaxes(xd, -1, -2) @ xs / src.shape[-2]
    u, sig, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u @ vt))
    sig = sig.copy()
    sig[..., 2] *= d
    u = u.copy()
    u[..., :, 2] *= d[..., None]
    r = u @ vt
    var = np.mean(np.sum(xs ** 2, axis=-1), axis=-1)
    s = sig.sum(axis=-1) / var
    return s[..., None, None] * (xs @ np.swapaxes(r, -1, -2)) + mu_d


def pa_mpjpe(pred, gt):
    pred, gt = _pair(pred, gt)
    return mpjpe(similarity_align(pred, gt), gt)


def mpjre(pred_rot, gt_rot):
    pred_rot, gt_rot = _pair(pred_rot, gt_rot, (3, 3))
    return float(np.degrees(np.mean(geodesic_angle(pred_rot, gt_rot))))


def accel_error(pred, gt, dt=DT):
    pred, gt = _pair(pred, gt)
    diff = finite_diff_accel(pred, dt) - finite_diff_accel(gt, dt)
    return float(np.mean(np.linalg.norm(diff, axis=-1)))


def _contact_mask(contact):
    c = np.asarray(contact, dtype=np.float64)
    if c.ndim == 3:  # (T, 2, 2) fore/rear bits
        c = c.max(axis=-1)
    return c > 0.5


def foot_sliding(foot_pos, contact, dt=DT):
    """Mean horizontal foot speed over frames labelled in contact (m/s).

    Speed at frame t is the forward difference to t+1, so the last frame
    never counts. Zero when no frame is in contact.
    """
    foot_pos = check_trailing_shape(foot_pos, (2, 3), "foot_pos")
    mask = _contact_mask(contact)
    if mask.shape != foot_pos.shape[:2]:
        raise LengthMismatch("contact labels do not match foot positions")
    if len(foot_pos) < 2:
        return 0.0
    speed = np.linalg.norm(np.diff(foot_pos[..., :2], axis=0), axis=-1) / dt
    m = mask[:-1]
    return float(speed[m].mean()) if m.any() else 0.0


def foot_penetration(foot_pos, terrain):
    """Mean depth of the feet below the terrain surface (mm)."""
    foot_pos = check_trailing_shape(foot_pos, (2, 3), "foot_pos")
    h = terrain.height(foot_pos[..., 0], foot_pos[..., 1])
    depth = np.maximum(0.0, h - foot_pos[..., 2])
    return 1000.0 * float(depth.mean(axis=0).mean())


def vgrf_error(pred_grf, measured_grf):
    """Per-foot RMS error of the vertical ground reaction force, averaged over feet (N)."""
    pred, meas = _pair(pred_grf, measured_grf, (2,))
    return float(np.mean(np.sqrt(np.mean((pred - meas) ** 2, axis=0))))


def success_rate(rollouts):
    """Fraction of sequences without any fall detection.

    Items may be rollouts (with a ``fell`` attribute), fall counts or booleans
    meaning "fell".
    """
    items = list(rollouts)
    if not items:
        raise EmptySet("no rollouts to score")
    fell = [bool(r.fell) if hasattr(r, "fell") else bool(r) for r in items]
    return 1.0 - sum(fell) / len(fell)


def sole_points(joint_pos, joint_rot, feet=FOOT_JOINTS, offset=SOLE_OFFSET):
    """Sole centres under the ankle joints, shape (T, 2, 3)."""
    return joint_pos[:, list(feet)] + joint_rot[:, list(feet)] @ offset


@dataclass
class MotionSequence:
    joint_pos: np.ndarray
    joint_rot: np.ndarray
    contact: np.ndarray | None = None  # (T, 2, 2)
    grf: np.ndarray | None = None  # (T, 2)
    dt: float = DT

    def __post_init__(self):
        self.joint_pos = check_trailing_shape(self.joint_pos, (24, 3), "joint_pos")
        self.joint_rot = check_trailing_shape(self.joint_rot, (24, 3, 3), "joint_rot")
        if len(self.joint_rot) != len(self.joint_pos):
            raise LengthMismatch("positions and rotations differ in length")
        for name in ("contact", "grf"):
            v = getattr(self, name)
            if v is not None and len(v) != len(self.joint_pos):
                raise LengthMismatch(f"{name} differs in length")

    def __len__(self):
        return len(self.joint_pos)

    def segment(self, start, stop):
        cut = lambda v: None if v is None else v[start:stop]  # noqa: E731
        return MotionSequence(self.joint_pos[start:stop], self.joint_rot[start:stop],
                              cut(self.contact), cut(self.grf), self.dt)


@dataclass
class MetricReport:
    mpjpe: float
    pel_mpjpe: float
    pa_mpjpe: float
    mpjre: float
    acc: float
    fs: float
    fp: float
    vgrf: float | None = None
    success_rate: float | None = None
    n_segments: int = 0

    def to_dict(self):
        d = asdict(self)
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "n_segments": d.pop("n_segments"),
            "metrics": {REPORT_HEADERS[k][0]: v for k, v in d.items()},
            "units": {h: u for h, u in REPORT_HEADERS.values()},
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != REPORT_FORMAT:
            raise ValueError("not a metric report")
        back = {h: k for k, (h, _) in REPORT_HEADERS.items()}
        vals = {back[h]: v for h, v in d["metrics"].items()}
        return cls(n_segments=d.get("n_segments", 0), **vals)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def segment_bounds(n_frames, segment_frames=SEGMENT_FRAMES):
    """Consecutive segments; a short tail is kept if it has at least 3 frames."""
    if segment_frames < MIN_SEGMENT_FRAMES:
        raise ValueError(f"segments need at least {MIN_SEGMENT_FRAMES} frames")
    out = []
    for start in range(0, n_frames, segment_frames):
        stop = min(start + segment_frames, n_frames)
        if stop - start >= MIN_SEGMENT_FRAMES:
            out.append((start, stop))
    return out


def segment_metrics(pred, gt, terrain):
    m = {
        "mpjpe": mpjpe(pred.joint_pos, gt.joint_pos),
        "pel_mpjpe": pel_mpjpe(pred.joint_pos, gt.joint_pos),
        "pa_mpjpe": pa_mpjpe(pred.joint_pos, gt.joint_pos),
        "mpjre": mpjre(pred.joint_rot, gt.joint_rot),
        "acc": accel_error(pred.joint_pos, gt.joint_pos, gt.dt),
        "fp": foot_penetration(sole_points(pred.joint_pos, pred.joint_rot), terrain),
    }
    contact = gt.contact if gt.contact is not None else pred.contact
    m["fs"] = (foot_sliding(pred.joint_pos[:, list(FOOT_JOINTS)], contact, gt.dt)
               if contact is not None else 0.0)
    if pred.grf is not None and gt.grf is not None:
        m["vgrf"] = vgrf_error(pred.grf, gt.grf)
    return m


def evaluate(pred, gt, terrain, segment_frames=SEGMENT_FRAMES, rollouts=None):
    """Segment-averaged :class:`MetricReport` of ``pred`` against ``gt``."""
    if len(pred) != len(gt):
        raise LengthMismatch(f"pred has {len(pred)} frames, gt {len(gt)}")
    bounds = segment_bounds(len(gt), segment_frames)
    if not bounds:
        raise EmptySet("sequence shorter than one segment")
    per = [segment_metrics(pred.segment(a, b), gt.segment(a, b), terrain) for a, b in bounds]
    keys = ("mpjpe", "pel_mpjpe", "pa_mpjpe", "mpjre", "acc", "fs", "fp")
    vals = {k: float(np.mean([p[k] for p in per])) for k in keys}
    vgrf = float(np.mean([p["vgrf"] for p in per])) if "vgrf" in per[0] else None
    sr = success_rate(rollouts) if rollouts is not None else None
    return MetricReport(vgrf=vgrf, success_rate=sr, n_segments=len(bounds), **vals)
