"""Rotation, alignment and signal primitives.

All rotation helpers are vectorised over leading dimensions: a batch of
rotations is an array of shape ``(..., 3, 3)`` and a batch of 6D encodings is
``(..., 6)`` with the first two matrix columns concatenated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.spatial.transform import Rotation as _SciRot
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_float_array, check_points, check_trailing_shape
from .exceptions import DegenerateInput, FlatSignal, InvalidCutoff, SequenceTooShort

GRAVITY = np.array([0.0, 0.0, -9.81])
UP = np.array([0.0, 0.0, 1.0])
FORWARD = np.array([0.0, 1.0, 0.0])
DT = 0.01

_EPS_6D = 1e-12


# --------------------------------------------------------------------------- #
# rotation representations
# --------------------------------------------------------------------------- #

def matrix_from_rot6d(v):
    """Decode the 6D representation by Gram-Schmidt.

    Parameters
    ----------
    v : array_like, shape (..., 6)
        First column followed by second column.

    Returns
    -------
    ndarray, shape (..., 3, 3)
        Columns ``(e1, e2, e1 x e2)``.

    Raises
    ------
    DegenerateInput
        If the first column vanishes or the two columns are parallel.
    """
    v = check_trailing_shape(v, (6,), "rot6d")
    a, b = v[..., :3], v[..., 3:]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(na <= _EPS_6D):
        raise DegenerateInput("rot6d: first column has zero length")
    e1 = a / na
    b_perp = b - np.sum(b * e1, axis=-1, keepdims=True) * e1
    nb = np.linalg.norm(b_perp, axis=-1, keepdims=True)
    if np.any(nb <= _EPS_6D):
        raise DegenerateInput("rot6d: columns are parallel")
    e2 = b_perp / nb
    e3 = np.cross(e1, e2)
    return np.stack([e1, e2, e3], axis=-1)


def rot6d_from_matrix(r):
    r = check_trailing_shape(r, (3, 3), "rotation")
    return np.concatenate([r[..., :, 0], r[..., :, 1]], axis=-1)


def identity_rot6d(shape=()):
    out = np.zeros(tuple(shape) + (6,))
    out[..., 0] = 1.0
    out[..., 4] = 1.0
    return out


def rot_z(angle):
    angle = np.asarray(angle, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(angle.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def rot_x(angle):
    angle = np.asarray(angle, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(angle.shape + (3, 3))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = c
    out[..., 1, 2] = -s
    out[..., 2, 1] = s
    out[..., 2, 2] = c
    return out


def rot_y(angle):
    angle = np.asarray(angle, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(angle.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 2] = s
    out[..., 1, 1] = 1.0
    out[..., 2, 0] = -s
    out[..., 2, 2] = c
    return out


def skew(v):
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def exp_map(rotvec):
    """Rotation matrices from rotation vectors (Rodrigues)."""
    rotvec = np.asarray(rotvec, dtype=np.float64)
    flat = rotvec.reshape(-1, 3)
    mats = _SciRot.from_rotvec(flat).as_matrix()
    return mats.reshape(rotvec.shape[:-1] + (3, 3))


def log_map(r):
    """Rotation vectors of rotation matrices, angle in [0, pi]."""
    r = np.asarray(r, dtype=np.float64)
    flat = r.reshape(-1, 3, 3)
    vecs = _SciRot.from_matrix(flat).as_rotvec()
    return vecs.reshape(r.shape[:-2] + (3,))


def project_to_rotation(m):
    """Nearest rotation in the Frobenius sense (SVD projection)."""
    m = np.asarray(m, dtype=np.float64)
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    u = u.copy()
    u[..., :, -1] *= d[..., None]
    return u @ vt


def chordal_mean(rotations):
    """Chordal L2 mean: average the matrices then project back onto SO(3)."""
    rotations = check_trailing_shape(rotations, (3, 3), "rotations")
    return project_to_rotation(rotations.reshape(-1, 3, 3).mean(axis=0))


def geodesic_angle(a, b):
    """Angle of ``a^T b`` in radians, in [0, pi]."""
    a = check_trailing_shape(a, (3, 3), "a")
    b = check_trailing_shape(b, (3, 3), "b")
    rel = np.swapaxes(a, -1, -2) @ b
    tr = np.trace(rel, axis1=-2, axis2=-1)
    # atan2 keeps precision near 0 and pi where arccos of the trace does not
    skew_part = np.stack([rel[..., 2, 1] - rel[..., 1, 2], rel[..., 0, 2] - rel[..., 2, 0],
                          rel[..., 1, 0] - rel[..., 0, 1]], axis=-1)
    return np.arctan2(0.5 * np.linalg.norm(skew_part, axis=-1), 0.5 * (tr - 1.0))


def heading_rotation(root, forward_axis=FORWARD, previous=None, eps=1e-6):
    """Yaw-only rotation carrying ``forward_axis`` onto the ground projection of
    ``root @ forward_axis``.

    When the rotated forward axis is within ``eps`` of vertical the heading is
    undefined; ``previous`` (or identity) is returned instead.
    """
    root = check_trailing_shape(root, (3, 3), "root")
    fwd = np.asarray(forward_axis, dtype=np.float64)
    f0 = fwd[:2]
    if np.linalg.norm(f0) < eps:
        raise DegenerateInput("forward_axis has no ground-plane component")
    f = root @ fwd
    fx, fy = f[..., 0], f[..., 1]
    norm = np.hypot(fx, fy)
    psi = np.arctan2(f0[0] * fy - f0[1] * fx, f0[0] * fx + f0[1] * fy)
    out = rot_z(psi)
    bad = norm < eps
    if np.any(bad):
        fallback = np.eye(3) if previous is None else np.asarray(previous, dtype=np.float64)
        out = np.where(bad[..., None, None], np.broadcast_to(fallback, out.shape), out)
    return out


def heading_sequence(roots, forward_axis=FORWARD, eps=1e-6):
    """Per-frame headings with carry-forward of the last valid heading."""
    roots = check_trailing_shape(roots, (3, 3), "roots")
    out = np.empty_like(roots)
    prev = None
    for t in range(len(roots)):
        prev = heading_rotation(roots[t], forward_axis, previous=prev, eps=eps)
        out[t] = prev
    return out


def random_rotations(n, rng):
    return _SciRot.random(n, random_state=rng).as_matrix()


# --------------------------------------------------------------------------- #
# similarity alignment
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SimilarityTransform:
    r: np.ndarray
    t: np.ndarray
    s: float = 1.0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("scale must be positive")

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.s * x @ self.r.T + self.t

    def residual(self, src, dst):
        return float(np.sum((self.apply(src) - np.asarray(dst)) ** 2))


def umeyama_align(src, dst, with_scale=True):
    """Least-squares similarity ``dst ~ s * R @ src + t``.

    Closed form via the SVD of the cross-covariance with a determinant sign
    correction so that ``R`` is a proper rotation.
    """
    src = check_points(src, "src")
    dst = check_points(dst, "dst")
    if len(src) != len(dst):
        raise DegenerateInput("src and dst differ in length")
    n = len(src)
    if n < 3:
        raise DegenerateInput("need at least 3 points")
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    xs, xd = src - mu_s, dst - mu_d
    sv_src = np.linalg.svd(xs, compute_uv=False)
    if sv_src[0] <= 1e-12 or sv_src[1] <= 1e-9 * sv_src[0]:
        raise DegenerateInput("src points are collinear")
    cov = xd.T @ xs / n
    u, d, vt = np.linalg.svd(cov)
    sgn = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sgn[2] = -1.0
    r = u @ np.diag(sgn) @ vt
    if with_scale:
        var_s = np.sum(xs ** 2) / n
        s = float(np.sum(d * sgn) / var_s)
    else:
        s = 1.0
    t = mu_d - s * r @ mu_s
    return SimilarityTransform(r=r, t=t, s=s)


class SimilarityAligner(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`umeyama_align`.

    ``fit(src, dst)`` estimates the transform; ``transform(x)`` maps points
    expressed like ``src`` into the ``dst`` frame.
    """

    def __init__(self, with_scale=True):
        self.with_scale = with_scale

    def fit(self, X, y):
        tf = umeyama_align(X, y, with_scale=self.with_scale)
        self.rotation_ = tf.r
        self.translation_ = tf.t
        self.scale_ = tf.s
        return self

    @property
    def transform_(self):
        check_is_fitted(self, "rotation_")
        return SimilarityTransform(self.rotation_, self.translation_, self.scale_)

    def transform(self, X):
        return self.transform_.apply(check_trailing_shape(X, (3,), "X"))


# --------------------------------------------------------------------------- #
# signals
# --------------------------------------------------------------------------- #

def finite_diff_accel(pos, dt=DT):
    """Central second difference with endpoints copied from their neighbours."""
    pos = as_float_array(pos, "pos")
    if len(pos) < 3:
        raise SequenceTooShort("finite differences need at least 3 samples")
    if not dt > 0:
        raise ValueError("dt must be positive")
    acc = np.empty_like(pos)
    acc[1:-1] = (pos[2:] - 2.0 * pos[1:-1] + pos[:-2]) / dt ** 2
    acc[0] = acc[1]
    acc[-1] = acc[-2]
    return acc


def finite_diff_velocity(pos, dt=DT):
    pos = as_float_array(pos, "pos")
    if len(pos) < 2:
        raise SequenceTooShort("finite differences need at least 2 samples")
    return np.gradient(pos, dt, axis=0)


def angular_velocity(rotations, dt=DT):
    """World-frame angular velocity from consecutive global rotations.

    Backward differences, with the first frame copying the second.
    """
    rotations = check_trailing_shape(rotations, (3, 3), "rotations")
    if len(rotations) < 2:
        return np.zeros(rotations.shape[:-1])
    rel = rotations[1:] @ np.swapaxes(rotations[:-1], -1, -2)
    w = log_map(rel) / dt
    return np.concatenate([w[:1], w], axis=0)


def lowpass(x, cutoff_hz=5.0, dt=DT, order=2):
    """Zero-phase Butterworth low-pass along axis 0 (forward-backward pass)."""
    x = as_float_array(x, "x")
    nyquist = 0.5 / dt
    if not 0.0 < cutoff_hz < nyquist:
        raise InvalidCutoff(f"cutoff {cutoff_hz} Hz outside (0, {nyquist}) Hz")
    b, a = signal.butter(order, cutoff_hz, btype="low", fs=1.0 / dt)
    padlen = min(3 * max(len(a), len(b)), len(x) - 1)
    return signal.filtfilt(b, a, x, axis=0, padlen=padlen)


def cross_correlation_offset(a, b, max_lag):
    """Lag ``k`` maximising the normalised correlation of ``b[t]`` with ``a[t - k]``.

    A positive result means ``b`` lags ``a``. Both signals are mean-removed and
    scaled to unit norm; ties go to the smallest ``|k|``.
    """
    a = as_float_array(a, "a").ravel()
    b = as_float_array(b, "b").ravel()
    max_lag = int(max_lag)
    if len(a) <= max_lag or len(b) <= max_lag:
        raise SequenceTooShort("signals must be longer than max_lag")
    if np.var(a) < 1e-12 or np.var(b) < 1e-12:
        raise FlatSignal("cannot correlate a constant signal")
    a = a - a.mean()
    b = b - b.mean()
    a /= np.linalg.norm(a)
    b /= np.linalg.norm(b)
    corr = signal.correlate(b, a, mode="full", method="direct")
    lags = signal.correlation_lags(len(b), len(a), mode="full")
    keep = np.abs(lags) <= max_lag
    corr, lags = corr[keep], lags[keep]
    best = corr.max()
    cand = lags[np.isclose(corr, best, rtol=0.0, atol=1e-12)]
    return int(cand[np.argmin(np.abs(cand))])
