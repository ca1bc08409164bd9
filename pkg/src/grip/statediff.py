"""Heading-aligned discrepancy between the kinematic estimate and the simulated humanoid."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ._validation import check_rotations, check_trailing_shape
from .rotmath import DT, heading_rotation, log_map, matrix_from_rot6d, rot6d_from_matrix
from .skeleton import IMU_JOINTS, KEY_JOINTS, N_JOINTS, ROOT

BLOCK_SHAPES = {
    "d_theta": (4, 6),
    "d_v": (6, 3),
    "d_omega": (4, 3),
    "theta_leaf": (4, 6),
    "d_p": (N_JOINTS, 3),
    "p": (N_JOINTS, 3),
}
STATE_DIFF_WIDTH = sum(int(np.prod(s)) for s in BLOCK_SHAPES.values())  # 222


@dataclass
class SimState:
    """Global joint positions, rotations and velocities of the simulated body."""

    joint_pos: np.ndarray
    joint_rot: np.ndarray
    joint_linvel: np.ndarray
    joint_angvel: np.ndarray

    def __post_init__(self):
        self.joint_pos = check_trailing_shape(self.joint_pos, (N_JOINTS, 3), "joint_pos")
        self.joint_rot = check_trailing_shape(self.joint_rot, (N_JOINTS, 3, 3), "joint_rot")
        self.joint_linvel = check_trailing_shape(self.joint_linvel, (N_JOINTS, 3), "joint_linvel")
        self.joint_angvel = check_trailing_shape(self.joint_angvel, (N_JOINTS, 3), "joint_angvel")

    @property
    def root_pos(self):
        return self.joint_pos[ROOT]

    @property
    def root_rot(self):
        return self.joint_rot[ROOT]

    def validate(self, atol=1e-6):
        check_rotations(self.joint_rot, "joint_rot", atol=atol)
        return self

    def rotated(self, q):
        """Same state seen after a global rotation ``q`` about the origin."""
        q = np.asarray(q, dtype=np.float64)
        return SimState(self.joint_pos @ q.T, q @ self.joint_rot,
                        self.joint_linvel @ q.T, self.joint_angvel @ q.T)


@dataclass(frozen=True)
class AblationMask:
    """Which state-difference blocks are exposed to the controller.

    ``o`` orientation blocks, ``a`` angular-velocity block, ``v`` key-joint
    velocity block, and one of ``j_rel`` (root-relative positions) or
    ``j_glo`` (positions placed globally by integrating the root velocity).
    """

    o: bool = True
    a: bool = True
    v: bool = True
    j_glo: bool = False
    j_rel: bool = True

    def __post_init__(self):
        if not any((self.o, self.a, self.v, self.j_glo, self.j_rel)):
            raise ValueError("at least one ablation flag must be set")
        if self.j_glo and self.j_rel:
            raise ValueError("j_glo and j_rel are mutually exclusive")

    _NAMED = {
        "OA": dict(o=True, a=True, v=False, j_glo=False, j_rel=False),
        "OAV": dict(o=True, a=True, v=True, j_glo=False, j_rel=False),
        "OAVJglo": dict(o=True, a=True, v=True, j_glo=True, j_rel=False),
        "OAVJrel": dict(o=True, a=True, v=True, j_glo=False, j_rel=True),
    }

    @classmethod
    def from_name(cls, name):
        try:
            return cls(**cls._NAMED[name])
        except KeyError:
            raise ValueError(f"unknown ablation {name!r}; choose from {sorted(cls._NAMED)}") from None

    @property
    def name(self):
        for k, v in self._NAMED.items():
            if all(getattr(self, f) == val for f, val in v.items()):
                return k
        return "custom"

    def block_enabled(self, block):
        return {
            "d_theta": self.o,
            "theta_leaf": self.o,
            "d_omega": self.a,
            "d_v": self.v,
            "d_p": self.j_glo or self.j_rel,
            "p": self.j_glo or self.j_rel,
        }[block]


FULL_MASK = AblationMask()


@dataclass
class StateDifference:
    d_theta: np.ndarray
    d_v: np.ndarray
    d_omega: np.ndarray
    theta_leaf: np.ndarray
    d_p: np.ndarray
    p: np.ndarray

    def flatten(self):
        return np.concatenate([getattr(self, f.name).ravel() for f in fields(self)])

    @classmethod
    def from_flat(cls, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (STATE_DIFF_WIDTH,):
            raise ValueError(f"expected {STATE_DIFF_WIDTH} values, got {vec.shape}")
        parts, start = {}, 0
        for name, shape in BLOCK_SHAPES.items():
            stop = start + int(np.prod(shape))
            parts[name] = vec[start:stop].reshape(shape)
            start = stop
        return cls(**parts)


def compute_state_difference(kin, sim, mask=FULL_MASK, kin_angvel=None, kin_root_global=None,
                             heading=None):
    """State difference in the simulated humanoid's heading frame.

    Parameters
    ----------
    kin : KinematicEstimate
        Single-frame estimate (root-centred positions, global rotations).
    sim : SimState
    mask : AblationMask
        Disabled blocks are zeroed; the layout never changes.
    kin_angvel : ndarray (4, 3), optional
        World-frame angular velocity of the kinematic IMU leaves. Zero if omitted.
    kin_root_global : ndarray (3,), optional
        Integrated global root position, required by the ``j_glo`` variant.
    heading : ndarray (3, 3), optional
        Precomputed heading (e.g. with carried-over fallback).
    """
    h = heading_rotation(sim.root_rot) if heading is None else np.asarray(heading)
    ht = h.T
    leaf = list(IMU_JOINTS)
    r_kin = matrix_from_rot6d(kin.theta[leaf])
    r_sim = sim.joint_rot[leaf]

    d_theta = rot6d_from_matrix(ht @ r_kin @ np.swapaxes(r_sim, -1, -2) @ h)
    d_v = (kin.v_key - sim.joint_linvel[list(KEY_JOINTS)]) @ h
    w_kin = np.zeros((4, 3)) if kin_angvel is None else np.asarray(kin_angvel, dtype=np.float64)
    d_omega = (w_kin - sim.joint_angvel[leaf]) @ h
    theta_leaf = rot6d_from_matrix(ht @ r_sim)

    sim_rel = (sim.joint_pos - sim.root_pos) @ h
    p_head = kin.p @ h
    if mask.j_glo:
        if kin_root_global is None:
            raise ValueError("j_glo variant needs the integrated kinematic root position")
        d_p = (kin.p + np.asarray(kin_root_global) - sim.joint_pos) @ h
    else:
        d_p = p_head - sim_rel

    out = StateDifference(d_theta, d_v, d_omega, theta_leaf, d_p, p_head)
    for name in BLOCK_SHAPES:
        if not mask.block_enabled(name):
            setattr(out, name, np.zeros(BLOCK_SHAPES[name]))
    return out


class StateDifferenceEncoder:
    """Per-sequence wrapper that supplies the temporal inputs.

    Keeps the previous kinematic leaf rotations (for angular velocity by
    backward differences), the integrated kinematic root position (for the
    ``j_glo`` variant) and the last valid heading.
    """

    def __init__(self, mask=FULL_MASK, dt=DT):
        self.mask = mask
        self.dt = dt
        self.reset()

    def reset(self, root_start=None):
        self._prev_rot = None
        self._heading = None
        self.kin_root = None if root_start is None else np.array(root_start, dtype=np.float64)

    def transform(self, kin, sim):
        rot = matrix_from_rot6d(kin.theta[list(IMU_JOINTS)])
        if self._prev_rot is None:
            w = np.zeros((4, 3))
        else:
            w = log_map(rot @ np.swapaxes(self._prev_rot, -1, -2)) / self.dt
        self._prev_rot = rot
        if self.kin_root is None:
            self.kin_root = sim.root_pos.copy()
        else:
            self.kin_root = self.kin_root + kin.v_key[-1] * self.dt
        self._heading = heading_rotation(sim.root_rot, previous=self._heading)
        return compute_state_difference(kin, sim, self.mask, kin_angvel=w,
                                        kin_root_global=self.kin_root, heading=self._heading)
