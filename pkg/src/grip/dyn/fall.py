"""Fall detection, recovery from buffered kinematic predictions, early termination."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import MissingContext
from ..rotmath import DT, matrix_from_rot6d
from ..skeleton import N_JOINTS, PARENTS, REST_OFFSETS
from ..statediff import SimState
from .terrain import FLAT


@dataclass(frozen=True)
class FallRecoveryConfig:
    tau_z: float = 0.30
    tau_rho: float = 0.7
    buffer_frames: int = 100
    tau_e: float = 0.25

    def __post_init__(self):
        if min(self.tau_z, self.tau_rho, self.tau_e) <= 0 or self.buffer_frames < 1:
            raise ValueError("fall-recovery thresholds must be positive")


@dataclass
class RecoverySegment:
    """Kinematic poses that replace the simulator output for the buffered frames."""

    frames: np.ndarray
    joint_pos: np.ndarray
    joint_rot: np.ndarray


def detect_fall(root_height, disc_prob, cfg=FallRecoveryConfig()):
    if not 0.0 <= disc_prob <= 1.0:
        raise ValueError("discriminator probability must lie in [0, 1]")
    return bool(root_height < cfg.tau_z and disc_prob < cfg.tau_rho)


def early_termination(kin_positions, sim_positions, cfg=FallRecoveryConfig()):
    err = np.linalg.norm(np.asarray(kin_positions) - np.asarray(sim_positions), axis=-1)
    return bool(err.max() > cfg.tau_e)


def _pose_from_theta(theta, root, offsets=REST_OFFSETS, parents=PARENTS):
    rot = matrix_from_rot6d(theta)
    pos = np.empty((N_JOINTS, 3))
    pos[0] = root
    for j in range(1, N_JOINTS):
        pos[j] = pos[parents[j]] + rot[parents[j]] @ offsets[j]
    return rot, pos


def _ground_clearance(model, rot, pos, terrain):
    """Lowest gap between the model's contact spheres and the terrain."""
    if model is None or len(model.contact_local) == 0:
        h = terrain.height(pos[:, 0], pos[:, 1])
        return float(np.min(pos[:, 2] - h))
    b = model.contact_body
    c = pos[b] + np.einsum("kij,kj->ki", rot[b], model.contact_local[:, :3])
    bottom = c[:, 2] - model.contact_local[:, 3]
    return float(np.min(bottom - terrain.height(c[:, 0], c[:, 1])))


def recover(sim, buf, cfg=FallRecoveryConfig(), kin_now=None, model=None, terrain=FLAT, dt=DT):
    """Reset a fallen humanoid from the last ``N`` buffered predictions.

    The new root (x, y) is the simulated root at the first buffered frame
    plus the integral of the buffered root velocities; the height is chosen
    so the kinematic pose rests on the terrain. Joint rotations come from
    ``kin_now`` (the estimate at frame t), else from the newest buffer entry.
    The root keeps the buffered root velocity; every joint's relative
    angular velocity is zero.
    """
    seg = buf.segment(n=cfg.buffer_frames)
    base = seg[0].sim_root
    if base is None:
        raise MissingContext("buffer entries need the simulated root position")
    v_root = np.array([e.v_key[-1] for e in seg])
    disp = dt * v_root.sum(axis=0)
    theta = seg[-1].theta if kin_now is None else kin_now.theta
    root = np.array([base[0] + disp[0], base[1] + disp[1], 0.0])
    offsets = REST_OFFSETS if model is None else model.offsets
    rot, pos = _pose_from_theta(theta, root, offsets)
    lift = -_ground_clearance(model, rot, pos, terrain)
    pos[:, 2] += lift
    vel = v_root[-1] if kin_now is None else kin_now.v_key[-1]
    state = SimState(pos, rot, np.tile(vel, (N_JOINTS, 1)), np.zeros((N_JOINTS, 3)))

    # replacement poses: buffered predictions placed along the integrated root path
    cum = np.concatenate([np.zeros((1, 3)), dt * np.cumsum(v_root[:-1], axis=0)])
    frames = np.array([e.frame for e in seg])
    seg_pos = np.empty((len(seg), N_JOINTS, 3))
    seg_rot = np.empty((len(seg), N_JOINTS, 3, 3))
    for k, e in enumerate(seg):
        seg_rot[k] = matrix_from_rot6d(e.theta)
        seg_pos[k] = np.asarray(base) + cum[k] + e.p
    return state.validate(), RecoverySegment(frames, seg_pos, seg_rot)
