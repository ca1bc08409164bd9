"""SMPL 24-joint topology, joint groupings and a rest-pose template.

Global frame is right-handed and z-up; the subject faces +y in the rest pose,
so +x points to the subject's right.
"""
from __future__ import annotations

import numpy as np

N_JOINTS = 24

JOINT_NAMES = (
    "pelvis", "l_hip", "r_hip", "spine1", "l_knee", "r_knee", "spine2",
    "l_ankle", "r_ankle", "spine3", "l_foot", "r_foot", "neck", "l_collar",
    "r_collar", "head", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
    "l_wrist", "r_wrist", "l_hand", "r_hand",
)

PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17,
           18, 19, 20, 21)

ROOT = 0
# wrists L/R, feet L/R (the ankle frame carries the foot segment), head
LEAF_JOINTS = (20, 21, 7, 8, 15)
# the four IMU-bearing leaves, in sensor-observation order
IMU_JOINTS = (20, 21, 7, 8)
KEY_JOINTS = LEAF_JOINTS + (ROOT,)
FOOT_JOINTS = (7, 8)

# Parent-relative rest offsets in metres (T-pose, arms horizontal).
REST_OFFSETS = np.array([
    [0.0, 0.0, 0.0],
    [-0.06, 0.0, -0.09],
    [0.06, 0.0, -0.09],
    [0.0, -0.01, 0.11],
    [-0.04, 0.0, -0.38],
    [0.04, 0.0, -0.38],
    [0.0, 0.01, 0.14],
    [0.0, -0.04, -0.40],
    [0.0, -0.04, -0.40],
    [0.0, 0.0, 0.05],
    [0.0, 0.12, -0.06],
    [0.0, 0.12, -0.06],
    [0.0, -0.03, 0.22],
    [-0.08, -0.01, 0.12],
    [0.08, -0.01, 0.12],
    [0.0, 0.05, 0.09],
    [-0.12, -0.02, 0.04],
    [0.12, -0.02, 0.04],
    [-0.26, 0.0, 0.0],
    [0.26, 0.0, 0.0],
    [-0.25, 0.0, 0.0],
    [0.25, 0.0, 0.0],
    [-0.08, 0.0, 0.0],
    [0.08, 0.0, 0.0],
])

# Pelvis height that puts the rest-pose soles on z = 0.
STANDING_ROOT_HEIGHT = 0.94


def children(parents=PARENTS):
    out = [[] for _ in parents]
    for j, p in enumerate(parents):
        if p >= 0:
            out[p].append(j)
    return out


def forward_kinematics(local_rot, root_pos, offsets=REST_OFFSETS, parents=PARENTS):
    """Global rotations and joint positions from parent-relative rotations.

    ``local_rot`` has shape (..., J, 3, 3) and ``root_pos`` (..., 3).
    """
    local_rot = np.asarray(local_rot, dtype=np.float64)
    root_pos = np.asarray(root_pos, dtype=np.float64)
    glob = np.empty_like(local_rot)
    pos = np.empty(local_rot.shape[:-1], dtype=np.float64)
    for j, p in enumerate(parents):
        if p < 0:
            glob[..., j, :, :] = local_rot[..., j, :, :]
            pos[..., j, :] = root_pos
        else:
            glob[..., j, :, :] = glob[..., p, :, :] @ local_rot[..., j, :, :]
            pos[..., j, :] = pos[..., p, :] + glob[..., p, :, :] @ offsets[j]
    return glob, pos


def local_from_global(global_rot, parents=PARENTS):
    global_rot = np.asarray(global_rot, dtype=np.float64)
    local = np.empty_like(global_rot)
    for j, p in enumerate(parents):
        if p < 0:
            local[..., j, :, :] = global_rot[..., j, :, :]
        else:
            local[..., j, :, :] = np.swapaxes(global_rot[..., p, :, :], -1, -2) @ global_rot[..., j, :, :]
    return local
