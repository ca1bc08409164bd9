"""Plantar pressure features and the per-frame sensor observation."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_float_array, check_rotations, check_trailing_shape
from .exceptions import LayoutMismatch

N_CELLS = 16
FEET = ("left", "right")

# canonical device order of the sensor observation, longest configuration
ALL_DEVICES = ("l_wrist", "r_wrist", "l_foot", "r_foot", "pelvis", "head")
CANONICAL_DEVICES = ALL_DEVICES[:4]
# devices are added in this order as the IMU count grows from 2 to 6
_ATTACH_ORDER = ("l_foot", "r_foot", "l_wrist", "r_wrist", "pelvis", "head")

DEFAULT_CONTACT_THRESHOLD = 10.0  # N per region
DEFAULT_COP_MIN_FORCE = 5.0  # N per foot

PROFILE_FORMAT = "grip-insole-profile"
PROFILE_VERSION = 1


def sensor_subset(n_imus):
    """Device names for an ``n_imus`` configuration, in observation order."""
    if not 2 <= n_imus <= 6:
        raise ValueError("IMU count must be between 2 and 6")
    chosen = set(_ATTACH_ORDER[:n_imus])
    return tuple(d for d in ALL_DEVICES if d in chosen)


@dataclass(frozen=True)
class PressureProfile:
    """Cell layout of one insole model: 16 (x, y) positions per foot.

    Coordinates are metres in a midfoot-centred frame, +x lateral and +y
    towards the toes.
    """

    name: str
    cell_positions: np.ndarray  # (2, 16, 2), left then right

    def __post_init__(self):
        pos = check_trailing_shape(self.cell_positions, (2, N_CELLS, 2), "cell_positions")
        object.__setattr__(self, "cell_positions", pos)

    @classmethod
    def grid(cls, pitch_x=0.02, pitch_y=0.06, name="grid4x4"):
        xs = (np.arange(4) - 1.5) * pitch_x
        ys = (np.arange(4) - 1.5) * pitch_y
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        cells = np.stack([xx.ravel(), yy.ravel()], axis=-1)
        return cls(name, np.stack([cells, cells]))

    def to_dict(self):
        return {
            "format": PROFILE_FORMAT,
            "version": PROFILE_VERSION,
            "name": self.name,
            "left": self.cell_positions[0].tolist(),
            "right": self.cell_positions[1].tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != PROFILE_FORMAT:
            raise ValueError("not an insole profile")
        if d.get("version") != PROFILE_VERSION:
            raise ValueError(f"unsupported profile version {d.get('version')}")
        return cls(d["name"], np.array([d["left"], d["right"]], dtype=np.float64))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_profile():
    text = resources.files("grip").joinpath("data/insole_grid4x4.json").read_text()
    return PressureProfile.from_dict(json.loads(text))


@dataclass
class InsoleFeatures:
    grf: np.ndarray  # (2,)
    cop: np.ndarray  # (2, 2)
    contact: np.ndarray  # (2, 2) forefoot, rearfoot

    def as_array(self):
        """Per foot: grf, cop_x, cop_y, contact_fore, contact_rear."""
        return np.concatenate([self.grf[:, None], self.cop, self.contact], axis=1)

    @classmethod
    def from_array(cls, arr):
        arr = check_trailing_shape(arr, (2, 5), "insole features")
        return cls(arr[:, 0].copy(), arr[:, 1:3].copy(), arr[:, 3:5].copy())

    @classmethod
    def zeros(cls):
        return cls(np.zeros(2), np.zeros((2, 2)), np.zeros((2, 2)))


def extract_features(cells, profile=None, contact_threshold=DEFAULT_CONTACT_THRESHOLD,
                     cop_min_force=DEFAULT_COP_MIN_FORCE):
    """GRF, centre of pressure and fore/rear contact bits for both feet.

    ``cells`` holds non-negative cell forces in newtons, shape (2, 16).
    """
    profile = default_profile() if profile is None else profile
    cells = check_trailing_shape(cells, (2, N_CELLS), "cells")
    if np.any(cells < 0):
        raise ValueError("pressure cells must be non-negative")
    pos = profile.cell_positions
    grf = cells.sum(axis=1)
    cop = np.zeros((2, 2))
    loaded = grf >= cop_min_force
    weighted = np.einsum("fc,fcd->fd", cells, pos)
    cop[loaded] = weighted[loaded] / grf[loaded, None]
    fore = pos[..., 1] > 0
    fore_sum = np.where(fore, cells, 0.0).sum(axis=1)
    rear_sum = np.where(~fore, cells, 0.0).sum(axis=1)
    contact = np.stack([fore_sum >= contact_threshold, rear_sum >= contact_threshold], axis=1)
    return InsoleFeatures(grf, cop, contact.astype(np.float64))


class InsoleFeatureExtractor(TransformerMixin, BaseEstimator):
    """Batch version of :func:`extract_features`: (T, 2, 16) -> (T, 2, 5)."""

    def __init__(self, profile=None, contact_threshold=DEFAULT_CONTACT_THRESHOLD,
                 cop_min_force=DEFAULT_COP_MIN_FORCE):
        self.profile = profile
        self.contact_threshold = contact_threshold
        self.cop_min_force = cop_min_force

    def fit(self, X=None, y=None):
        self.profile_ = default_profile() if self.profile is None else self.profile
        return self

    def transform(self, X):
        prof = self.profile if self.profile is not None else default_profile()
        X = check_trailing_shape(X, (2, N_CELLS), "X")
        return np.stack([
            extract_features(frame, prof, self.contact_threshold, self.cop_min_force).as_array()
            for frame in X.reshape(-1, 2, N_CELLS)
        ]).reshape(X.shape[:-2] + (2, 5))


@dataclass
class SensorObservation:
    """Rotations, gravity-free accelerations and insole features for one frame.

    Flattened layout: all rotation matrices (row-major, device order), then
    accelerations, then the (2, 5) insole block.
    """

    r: np.ndarray
    a: np.ndarray
    i: np.ndarray
    devices: tuple = CANONICAL_DEVICES

    @property
    def width(self):
        return observation_width(len(self.devices))

    def flatten(self):
        return np.concatenate([self.r.ravel(), self.a.ravel(), self.i.ravel()])

    @classmethod
    def unflatten(cls, vec, devices=CANONICAL_DEVICES):
        vec = as_float_array(vec, "observation")
        n = len(devices)
        if vec.shape != (observation_width(n),):
            raise LayoutMismatch(f"expected width {observation_width(n)}, got {vec.shape}")
        r = vec[: 9 * n].reshape(n, 3, 3)
        a = vec[9 * n: 12 * n].reshape(n, 3)
        i = vec[12 * n:].reshape(2, 5)
        return cls(r, a, i, tuple(devices))


def observation_width(n_devices=4):
    return 12 * n_devices + 10


def build_sensor_observation(imu, feats, devices=CANONICAL_DEVICES):
    """Assemble a :class:`SensorObservation`.

    ``imu`` is a sequence of ``(name, orientation, accel)`` triples that must
    follow ``devices`` exactly. ``feats`` is an :class:`InsoleFeatures` or a
    (2, 5) array; pass zeros for pressure-free configurations.
    """
    imu = list(imu)
    names = tuple(name for name, _, _ in imu)
    if names != tuple(devices):
        raise LayoutMismatch(f"device order {names} does not match {tuple(devices)}")
    r = check_rotations(np.array([o for _, o, _ in imu], dtype=np.float64), "imu orientation", atol=1e-6)
    a = check_trailing_shape(np.array([acc for _, _, acc in imu], dtype=np.float64), (3,), "imu accel")
    i = feats.as_array() if isinstance(feats, InsoleFeatures) else check_trailing_shape(feats, (2, 5), "feats")
    return SensorObservation(r, a, np.asarray(i, dtype=np.float64), tuple(devices))


def observation_sequence(orientations, accels, insole, pressure=True):
    """Stack per-frame observations into a (T, width) matrix.

    ``orientations`` (T, D, 3, 3), ``accels`` (T, D, 3), ``insole`` (T, 2, 5).
    With ``pressure=False`` the insole block is zeroed, keeping the layout.
    """
    orientations = check_trailing_shape(orientations, (3, 3), "orientations")
    accels = check_trailing_shape(accels, (3,), "accels")
    insole = check_trailing_shape(insole, (2, 5), "insole")
    t = len(orientations)
    ins = insole.reshape(t, 10) if pressure else np.zeros((t, 10))
    return np.concatenate([orientations.reshape(t, -1), accels.reshape(t, -1), ins], axis=1)
