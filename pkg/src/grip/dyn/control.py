"""Proportional-derivative torque laws."""
from __future__ import annotations

import numpy as np

from ..rotmath import log_map


def wrap_angle(x):
    """Map angles to the shortest arc in [-pi, pi)."""
    return (np.asarray(x, dtype=np.float64) + np.pi) % (2 * np.pi) - np.pi


def _gains(model, kp, kd, limit):
    if model is not None:
        kp = model.kp[:, None] if kp is None else kp
        kd = model.kd[:, None] if kd is None else kd
        limit = model.torque_limit[:, None] if limit is None else limit
    if kp is None or kd is None:
        raise ValueError("pass a model or explicit gains")
    return kp, kd, np.inf if limit is None else limit


def pd_torque(theta_target, theta, theta_dot, model=None, kp=None, kd=None, limit=None):
    """Per-axis PD torque ``kp * (target - theta) - kd * theta_dot``, clamped.

    Angle errors are wrapped to the shortest arc. Gains and limits default to
    the model's per-joint values and broadcast against the angle arrays.
    """
    kp, kd, limit = _gains(model, kp, kd, limit)
    err = wrap_angle(np.asarray(theta_target, dtype=np.float64) - np.asarray(theta, dtype=np.float64))
    tau = kp * err - kd * np.asarray(theta_dot, dtype=np.float64)
    return np.clip(tau, -np.asarray(limit), np.asarray(limit))


def ball_pd_torque(target_local, local_rot, local_angvel, model=None, kp=None, kd=None, limit=None):
    """PD torque for ball joints, error as the rotation vector of ``R^T R*``.

    Torques are expressed in each joint's own frame, matching the simulator's
    relative angular velocities. The error rotation is always the short one.
    """
    err = log_map(np.swapaxes(local_rot, -1, -2) @ target_local)
    return pd_torque(err, np.zeros_like(err), local_angvel, model, kp, kd, limit)
