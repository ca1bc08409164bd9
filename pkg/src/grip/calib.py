"""Device calibration, time synchronisation and IMU synthesis.

Frame notation follows ``R_a_b``: the rotation taking coordinates expressed in
frame ``a`` into frame ``b``. ``g`` is the global MoCap frame (z up), ``r`` a
device's own reference frame, ``s`` the sensor frame and ``j`` the joint frame.

All calibrated accelerations are gravity-free: a stationary sensor yields zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_rotations, check_trailing_shape
from .exceptions import (
    DegenerateInput,
    DegenerateTrajectory,
    MissingContext,
    MissingTpose,
    StaticityViolation,
)
from .rotmath import (
    DT,
    GRAVITY,
    chordal_mean,
    cross_correlation_offset,
    finite_diff_accel,
    log_map,
    umeyama_align,
)
from .vqf import vqf_track

DEVICE_KINDS = ("watch", "strap", "insole_left", "insole_right", "headset")

STATIC_VARIANCE_BOUND = 0.05  # (m/s^2)^2 per axis
MIN_STATIC_FRAMES = 100

# handedness correction for the left insole sensor
LEFT_GYRO_SIGNS = np.array([-1.0, 1.0, -1.0])
LEFT_ACCEL_SIGNS = np.array([1.0, -1.0, 1.0])


@dataclass
class RawImuStream:
    device_kind: str
    gyro: np.ndarray
    accel: np.ndarray
    orientation: np.ndarray | None = None
    dt: float = DT

    def __post_init__(self):
        if self.device_kind not in DEVICE_KINDS:
            raise ValueError(f"unknown device kind {self.device_kind!r}")
        self.gyro = check_trailing_shape(self.gyro, (3,), "gyro")
        self.accel = check_trailing_shape(self.accel, (3,), "accel")
        if len(self.accel) == 0:
            raise ValueError("empty stream")
        if len(self.gyro) != len(self.accel):
            raise ValueError("gyro and accel lengths differ")
        if self.orientation is not None:
            self.orientation = check_rotations(self.orientation, "orientation", atol=1e-6)
            if len(self.orientation) != len(self.accel):
                raise ValueError("orientation and accel lengths differ")

    def __len__(self):
        return len(self.accel)

    def window(self, start, stop):
        return RawImuStream(
            self.device_kind, self.gyro[start:stop], self.accel[start:stop],
            None if self.orientation is None else self.orientation[start:stop], self.dt,
        )


@dataclass
class CalibratedImuStream:
    orientation: np.ndarray
    accel: np.ndarray
    dt: float = DT

    def __post_init__(self):
        self.orientation = check_trailing_shape(self.orientation, (3, 3), "orientation")
        self.accel = check_trailing_shape(self.accel, (3,), "accel")
        if len(self.orientation) != len(self.accel):
            raise ValueError("orientation and accel lengths differ")

    def __len__(self):
        return len(self.accel)

    def trim(self, start, stop):
        return CalibratedImuStream(self.orientation[start:stop], self.accel[start:stop], self.dt)


@dataclass
class CalibrationContext:
    ref_frame_r_to_g: np.ndarray | None = None
    joint_to_sensor: np.ndarray | None = None
    tpose_window: tuple[int, int] | None = None
    tpose_joint_global: np.ndarray | None = None

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise MissingContext(f"calibration context lacks {', '.join(missing)}")


@dataclass
class HeadsetExtrinsics:
    imu_to_device: np.ndarray
    imu_to_cpf: np.ndarray
    slam_device_orientation: np.ndarray
    slam_position: np.ndarray = field(default=None)

    def __post_init__(self):
        self.imu_to_device = check_rotations(self.imu_to_device, "imu_to_device", atol=1e-6)
        self.imu_to_cpf = check_rotations(self.imu_to_cpf, "imu_to_cpf", atol=1e-6)
        self.slam_device_orientation = check_rotations(
            self.slam_device_orientation, "slam_device_orientation", atol=1e-6)
        self.slam_position = check_trailing_shape(self.slam_position, (3,), "slam_position")


def _check_static(accel, name="window", bound=STATIC_VARIANCE_BOUND):
    if len(accel) < MIN_STATIC_FRAMES:
        raise StaticityViolation(f"{name}: need at least {MIN_STATIC_FRAMES} frames, got {len(accel)}")
    var = np.var(accel, axis=0)
    if np.any(var >= bound):
        raise StaticityViolation(f"{name}: accel variance {var.max():.4g} exceeds {bound}")


def estimate_reference_frame(stream, static_window=None, static_bound=STATIC_VARIANCE_BOUND):
    """Chordal-mean device orientation over a static floor placement.

    With the device lying aligned with the global axes its reported
    orientation equals ``R_g_r``; the inverse is the ``R_r_g`` used later.
    """
    if stream.orientation is None:
        raise MissingContext("stream carries no orientation")
    start, stop = static_window if static_window is not None else (0, len(stream))
    _check_static(stream.accel[start:stop], "floor window", static_bound)
    return chordal_mean(stream.orientation[start:stop])


def joint_to_sensor_from_tpose(stream, ref_frame_r_to_g, tpose_window, tpose_joint_global,
                               static_bound=STATIC_VARIANCE_BOUND):
    """``R_j_s = (R_s_r at T-pose)^-1 R_g_r R_j_g at T-pose``."""
    start, stop = tpose_window
    if stop <= start:
        raise MissingContext("empty T-pose window")
    _check_static(stream.accel[start:stop], "T-pose window", static_bound)
    r_s_r = chordal_mean(stream.orientation[start:stop])
    return r_s_r.T @ ref_frame_r_to_g.T @ np.asarray(tpose_joint_global, dtype=np.float64)


def calibrate_watch_strap(stream, ctx):
    """Global joint orientation and gravity-free global acceleration."""
    ctx.require("ref_frame_r_to_g", "joint_to_sensor")
    if stream.orientation is None:
        raise MissingContext("watch/strap stream carries no orientation")
    r_s_g = ctx.ref_frame_r_to_g @ stream.orientation
    orient = r_s_g @ ctx.joint_to_sensor
    accel = np.einsum("tij,tj->ti", r_s_g, stream.accel) + GRAVITY
    return CalibratedImuStream(orient, accel, stream.dt)


def insole_joint_signals(stream, side, sensor_to_joint):
    """Apply the handedness correction and rotate into the joint frame."""
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    gyr, acc = stream.gyro, stream.accel
    if side == "left":
        gyr = gyr * LEFT_GYRO_SIGNS
        acc = acc * LEFT_ACCEL_SIGNS
    r = np.asarray(sensor_to_joint, dtype=np.float64)
    return gyr @ r.T, acc @ r.T


def calibrate_insole(stream, side, sensor_to_joint, tpose_joint_global,
                     tpose_vqf=None, tpose_frame=None, tau_acc=3.0):
    """Insole IMU path: handedness fix, VQF, then T-pose heading alignment.

    ``tpose_vqf`` may be given directly; otherwise the filter output at
    ``tpose_frame`` is used.
    """
    if tpose_joint_global is None or (tpose_vqf is None and tpose_frame is None):
        raise MissingTpose("insole calibration needs the T-pose joint rotation and frame")
    gyr_j, acc_j = insole_joint_signals(stream, side, sensor_to_joint)
    r_j_vqf = vqf_track(gyr_j, acc_j, stream.dt, tau_acc=tau_acc)
    if tpose_vqf is None:
        tpose_vqf = r_j_vqf[int(tpose_frame)]
    align = np.asarray(tpose_joint_global, dtype=np.float64) @ np.asarray(tpose_vqf).T
    orient = align @ r_j_vqf
    accel = np.einsum("tij,tj->ti", orient, acc_j) + GRAVITY
    return CalibratedImuStream(orient, accel, stream.dt)


@dataclass
class HeadsetCalibration:
    stream: CalibratedImuStream
    world_to_global: np.ndarray
    translation: np.ndarray
    scale: float


def calibrate_headset(ext, mocap_cpf_positions, accel_i, dt=DT):
    """SLAM-to-MoCap similarity alignment followed by the extrinsic chain."""
    mocap = check_trailing_shape(mocap_cpf_positions, (3,), "mocap_cpf_positions")
    accel_i = check_trailing_shape(accel_i, (3,), "accel_i")
    if len(mocap) != len(ext.slam_position):
        raise DegenerateTrajectory("SLAM and MoCap trajectories differ in length")
    try:
        tf = umeyama_align(ext.slam_position, mocap, with_scale=True)
    except DegenerateInput as exc:
        raise DegenerateTrajectory(str(exc)) from exc
    r_i_w = ext.slam_device_orientation @ ext.imu_to_device
    orient = tf.r @ r_i_w @ ext.imu_to_cpf
    accel = np.einsum("ij,tjk,tk->ti", tf.r, r_i_w, accel_i) + GRAVITY
    return HeadsetCalibration(CalibratedImuStream(orient, accel, dt), tf.r, tf.t, tf.s)


@dataclass
class SyncResult:
    offsets: list
    window: tuple
    streams: list


def common_window(offsets, lengths, reference_length):
    """Overlap, in reference frame indices, of streams shifted by ``offsets``.

    Stream ``i`` sample ``k`` sits at reference time ``k - offsets[i]``.
    """
    start = max([0] + [-o for o in offsets])
    stop = min([reference_length] + [n - o for n, o in zip(lengths, offsets)])
    if stop <= start:
        raise DegenerateInput("streams do not overlap after synchronisation")
    return int(start), int(stop)


def synchronize(streams, reference_vertical_accel, max_lag=200):
    """Per-stream offsets against MoCap-derived vertical accelerations.

    ``reference_vertical_accel`` is either one series shared by all streams or
    a list with one series per stream (one per attachment site). Returns the
    offsets (positive: the stream lags the reference), the common window in
    reference frames, and the trimmed streams.
    """
    refs = reference_vertical_accel
    if isinstance(refs, np.ndarray) and refs.ndim == 1:
        refs = [refs] * len(streams)
    if len(refs) != len(streams):
        raise ValueError("need one reference series per stream")
    offsets = [cross_correlation_offset(ref, s.accel[:, 2], max_lag) for s, ref in zip(streams, refs)]
    ref_len = min(len(r) for r in refs)
    start, stop = common_window(offsets, [len(s) for s in streams], ref_len)
    trimmed = [s.trim(start + o, stop + o) for s, o in zip(streams, offsets)]
    return SyncResult(offsets, (start, stop), trimmed)


def synthesize_imu(joint_orientations, attachment_positions, dt=DT):
    """Virtual IMU from motion labels: orientation passthrough, accel by finite differences."""
    orient = check_trailing_shape(joint_orientations, (3, 3), "joint_orientations")
    pos = check_trailing_shape(attachment_positions, (3,), "attachment_positions")
    return CalibratedImuStream(orient.copy(), finite_diff_accel(pos, dt), dt)


def body_angular_velocity(orientations, dt=DT):
    """Body-frame angular velocity ``log(R_t^T R_{t+1}) / dt``; last sample repeated."""
    r = np.asarray(orientations, dtype=np.float64)
    w = log_map(np.swapaxes(r[:-1], -1, -2) @ r[1:]) / dt
    return np.concatenate([w, w[-1:]], axis=0)


# --------------------------------------------------------------------------- #
# inverse models: raw device signals from known motion (fixtures and tests)
# --------------------------------------------------------------------------- #

def simulate_raw_watch(calibrated, ref_frame_r_to_g, joint_to_sensor, kind="watch"):
    r_s_g = calibrated.orientation @ np.asarray(joint_to_sensor).T
    r_s_r = np.asarray(ref_frame_r_to_g).T @ r_s_g
    specific = calibrated.accel - GRAVITY
    accel_s = np.einsum("tji,tj->ti", r_s_g, specific)
    gyro_s = body_angular_velocity(r_s_g, calibrated.dt)
    return RawImuStream(kind, gyro_s, accel_s, r_s_r, calibrated.dt)


def simulate_raw_insole(calibrated, side, sensor_to_joint):
    """Raw insole signals that :func:`calibrate_insole` maps back to ``calibrated``."""
    r = np.asarray(sensor_to_joint, dtype=np.float64)
    gyr_j = body_angular_velocity(calibrated.orientation, calibrated.dt)
    # the filter integrates w_t over [t-1, t], so feed the step that ends at t
    gyr_j = np.concatenate([np.zeros((1, 3)), gyr_j[:-1]], axis=0)
    acc_j = np.einsum("tji,tj->ti", calibrated.orientation, calibrated.accel - GRAVITY)
    gyr_s, acc_s = gyr_j @ r, acc_j @ r
    if side == "left":
        gyr_s = gyr_s * LEFT_GYRO_SIGNS
        acc_s = acc_s * LEFT_ACCEL_SIGNS
    kind = "insole_left" if side == "left" else "insole_right"
    return RawImuStream(kind, gyr_s, acc_s, None, calibrated.dt)


# --------------------------------------------------------------------------- #
# estimator front-ends
# --------------------------------------------------------------------------- #

class WatchStrapCalibrator(TransformerMixin, BaseEstimator):
    """Fit on a floor placement plus the T-pose, transform raw streams.

    Parameters
    ----------
    tpose_window : (int, int)
        Frame range of the static T-pose inside the recording.
    tpose_joint_global : ndarray (3, 3)
        Global joint rotation of the attachment site in the T-pose.
    floor_window : (int, int) or None
        Static frame range of the floor placement; None uses the whole stream.
    """

    def __init__(self, tpose_window=None, tpose_joint_global=None, floor_window=None,
                 static_bound=STATIC_VARIANCE_BOUND):
        self.tpose_window = tpose_window
        self.tpose_joint_global = tpose_joint_global
        self.floor_window = floor_window
        self.static_bound = static_bound

    def fit(self, X, y=None, floor=None):
        if floor is None:
            raise MissingContext("floor placement stream required")
        if self.tpose_window is None or self.tpose_joint_global is None:
            raise MissingContext("T-pose window and joint rotation required")
        r_g_r = estimate_reference_frame(floor, self.floor_window, self.static_bound)
        self.ref_frame_r_to_g_ = r_g_r.T
        self.joint_to_sensor_ = joint_to_sensor_from_tpose(
            X, self.ref_frame_r_to_g_, self.tpose_window, self.tpose_joint_global, self.static_bound)
        return self

    @property
    def context_(self):
        check_is_fitted(self, "joint_to_sensor_")
        return CalibrationContext(self.ref_frame_r_to_g_, self.joint_to_sensor_,
                                  self.tpose_window, self.tpose_joint_global)

    def transform(self, X):
        return calibrate_watch_strap(X, self.context_)


class InsoleCalibrator(TransformerMixin, BaseEstimator):
    def __init__(self, side="left", sensor_to_joint=None, tpose_joint_global=None,
                 tpose_frame=0, tau_acc=3.0):
        self.side = side
        self.sensor_to_joint = sensor_to_joint
        self.tpose_joint_global = tpose_joint_global
        self.tpose_frame = tpose_frame
        self.tau_acc = tau_acc

    def fit(self, X=None, y=None):
        if self.tpose_joint_global is None:
            raise MissingTpose("T-pose joint rotation required")
        self.sensor_to_joint_ = (np.eye(3) if self.sensor_to_joint is None
                                 else np.asarray(self.sensor_to_joint, dtype=np.float64))
        return self

    def transform(self, X):
        check_is_fitted(self, "sensor_to_joint_")
        return calibrate_insole(X, self.side, self.sensor_to_joint_, self.tpose_joint_global,
                                tpose_frame=self.tpose_frame, tau_acc=self.tau_acc)
