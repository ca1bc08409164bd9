"""Gyroscope/accelerometer orientation filter (basic VQF variant).

Strapdown integration of the gyroscope gives a fast orientation estimate; the
accelerometer, rotated into an almost-inertial frame and low-pass filtered
there with a second-order Butterworth filter, supplies an inclination
correction. No magnetometer, no bias estimation. Heading stays relative to the
initial sensor heading.

Quaternions are ``[w, x, y, z]`` and map sensor-frame vectors to the filter's
earth frame (z up).
"""
from __future__ import annotations

import math

import numpy as np

_EPS = np.finfo(np.float64).eps


def quat_multiply(q1, q2):
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_rotate(q, v):
    w, x, y, z = q
    return np.array([
        (1 - 2 * y * y - 2 * z * z) * v[0] + 2 * v[1] * (x * y - w * z) + 2 * v[2] * (w * y + x * z),
        2 * v[0] * (w * z + x * y) + v[1] * (1 - 2 * x * x - 2 * z * z) + 2 * v[2] * (y * z - w * x),
        2 * v[0] * (x * z - w * y) + 2 * v[1] * (w * x + y * z) + v[2] * (1 - 2 * x * x - 2 * y * y),
    ])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _butter2(tau, ts):
    # second-order Butterworth parametrised by the non-oscillating time constant
    fc = math.sqrt(2) / (2.0 * math.pi * tau)
    c = math.tan(math.pi * fc * ts)
    d = c * c + math.sqrt(2) * c + 1
    b0 = c * c / d
    b = np.array([b0, 2 * b0, b0])
    a = np.array([2 * (c * c - 1) / d, (1 - math.sqrt(2) * c + c * c) / d])
    return b, a


class BasicVQF:
    """Sample-by-sample filter state.

    Parameters
    ----------
    ts : float
        Sampling period in seconds.
    tau_acc : float
        Time constant of the accelerometer low-pass filter, seconds.
    """

    def __init__(self, ts, tau_acc=3.0):
        if not ts > 0:
            raise ValueError("ts must be positive")
        self.ts = float(ts)
        self.tau_acc = float(tau_acc)
        self._b, self._a = _butter2(self.tau_acc, self.ts)
        self.reset()

    def reset(self):
        self.gyr_quat = np.array([1.0, 0.0, 0.0, 0.0])
        self.acc_quat = np.array([1.0, 0.0, 0.0, 0.0])
        self._lp_state = np.full((2, 3), np.nan)
        self._lp_count = 0
        self._lp_sum = np.zeros(3)

    def _filter_acc(self, x):
        # averaging warm-up for tau_acc seconds, then the IIR filter
        if np.isnan(self._lp_state[0, 0]):
            self._lp_count += 1
            self._lp_sum += x
            out = self._lp_sum / self._lp_count
            if self._lp_count * self.ts >= self.tau_acc:
                b, a = self._b, self._a
                self._lp_state[0] = out * (1 - b[0])
                self._lp_state[1] = out * (b[2] - a[1])
            return out
        b, a, st = self._b, self._a, self._lp_state
        y = b[0] * x + st[0]
        st[0] = b[1] * x - a[0] * y + st[1]
        st[1] = b[2] * x - a[1] * y
        return y

    def update_gyr(self, gyr):
        gyr = np.asarray(gyr, dtype=np.float64)
        norm = math.sqrt(gyr @ gyr)
        if norm > _EPS:
            half = 0.5 * norm * self.ts
            s = math.sin(half) / norm
            step = np.array([math.cos(half), s * gyr[0], s * gyr[1], s * gyr[2]])
            q = quat_multiply(self.gyr_quat, step)
            self.gyr_quat = q / np.linalg.norm(q)

    def update_acc(self, acc):
        acc = np.asarray(acc, dtype=np.float64)
        if not np.any(acc):
            return
        acc_earth = self._filter_acc(quat_rotate(self.gyr_quat, acc))
        acc_earth = quat_rotate(self.acc_quat, acc_earth)
        acc_earth = acc_earth / np.linalg.norm(acc_earth)
        qw = math.sqrt(max(acc_earth[2] + 1.0, 0.0) / 2.0)
        if qw > 1e-6:
            corr = np.array([qw, 0.5 * acc_earth[1] / qw, -0.5 * acc_earth[0] / qw, 0.0])
        else:
            corr = np.array([0.0, 1.0, 0.0, 0.0])
        q = quat_multiply(corr, self.acc_quat)
        self.acc_quat = q / np.linalg.norm(q)

    def update(self, gyr, acc):
        self.update_gyr(gyr)
        self.update_acc(acc)

    @property
    def quat6d(self):
        q = quat_multiply(self.acc_quat, self.gyr_quat)
        return q / np.linalg.norm(q)


def vqf_track(gyro, accel, dt=0.01, tau_acc=3.0):
    """Run the filter over a batch and return per-frame rotation matrices.

    Returns an array of shape (n, 3, 3) mapping sensor-frame vectors into the
    gravity-aligned filter frame.
    """
    gyro = np.asarray(gyro, dtype=np.float64)
    accel = np.asarray(accel, dtype=np.float64)
    if gyro.shape != accel.shape or gyro.ndim != 2 or gyro.shape[1] != 3:
        raise ValueError("gyro and accel must both have shape (n, 3)")
    filt = BasicVQF(dt, tau_acc=tau_acc)
    out = np.empty((len(gyro), 3, 3))
    for t in range(len(gyro)):
        filt.update(gyro[t], accel[t])
        out[t] = quat_to_matrix(filt.quat6d)
    return out
