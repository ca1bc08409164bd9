"""Staged recurrent kinematic estimator.

Four unidirectional LSTM stages run frame by frame:

* LP  - leaf-joint positions from the sensor observation
* FP  - all joint positions from observation + LP output
* FA  - global joint rotations (6D) from observation + FP output
* KV  - global key-joint velocities from observation + FP output

Positions are root-centred but keep the body's global rotation. Hidden states
of every stage can be seeded from the first frame's ground truth through a
learned linear map.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted
from torch import nn

from ._validation import as_float_array, check_trailing_shape
from .exceptions import ShapeMismatch, Underflow
from .insole import observation_width
from .rotmath import DT, matrix_from_rot6d, rot6d_from_matrix
from .skeleton import KEY_JOINTS, LEAF_JOINTS, N_JOINTS, ROOT

FIELDS = ("p_leaf", "p", "theta", "v_key")
FIELD_SHAPES = {"p_leaf": (5, 3), "p": (N_JOINTS, 3), "theta": (N_JOINTS, 6), "v_key": (6, 3)}
FIELD_SIZES = {k: int(np.prod(v)) for k, v in FIELD_SHAPES.items()}
ESTIMATE_WIDTH = sum(FIELD_SIZES.values())  # 249

CHECKPOINT_FORMAT = "grip-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class KinematicEstimate:
    """Per-frame (or per-sequence, with a leading time axis) kinematic state."""

    p_leaf: np.ndarray
    p: np.ndarray
    theta: np.ndarray
    v_key: np.ndarray

    def __post_init__(self):
        lead = None
        for name in FIELDS:
            arr = check_trailing_shape(getattr(self, name), FIELD_SHAPES[name], name)
            here = arr.shape[: arr.ndim - 2]
            if lead is None:
                lead = here
            elif here != lead:
                raise ShapeMismatch(f"{name}: leading shape {here} differs from {lead}")
            setattr(self, name, arr)

    def __len__(self):
        return self.p.shape[0] if self.p.ndim == 3 else 1

    def __getitem__(self, idx):
        return KinematicEstimate(*(getattr(self, n)[idx] for n in FIELDS))

    def rotations(self):
        return matrix_from_rot6d(self.theta)

    def flatten(self):
        lead = self.p.shape[:-2]
        return np.concatenate([getattr(self, n).reshape(lead + (-1,)) for n in FIELDS], axis=-1)

    @classmethod
    def from_flat(cls, vec):
        vec = as_float_array(vec, "estimate")
        if vec.shape[-1] != ESTIMATE_WIDTH:
            raise ShapeMismatch(f"expected width {ESTIMATE_WIDTH}, got {vec.shape[-1]}")
        lead = vec.shape[:-1]
        parts, start = [], 0
        for n in FIELDS:
            stop = start + FIELD_SIZES[n]
            parts.append(vec[..., start:stop].reshape(lead + FIELD_SHAPES[n]))
            start = stop
        return cls(*parts)

    @classmethod
    def stack(cls, frames):
        return cls(*(np.stack([getattr(f, n) for f in frames]) for n in FIELDS))

    @classmethod
    def zeros(cls, lead=()):
        return cls(*(np.zeros(tuple(lead) + FIELD_SHAPES[n]) for n in FIELDS))


def kinematic_targets(joint_pos, joint_rot, dt=DT):
    """Ground-truth estimate from global joint positions (T, 24, 3) and rotations (T, 24, 3, 3)."""
    joint_pos = check_trailing_shape(joint_pos, (N_JOINTS, 3), "joint_pos")
    joint_rot = check_trailing_shape(joint_rot, (N_JOINTS, 3, 3), "joint_rot")
    p = joint_pos - joint_pos[:, ROOT: ROOT + 1]
    vel = np.gradient(joint_pos, dt, axis=0) if len(joint_pos) > 1 else np.zeros_like(joint_pos)
    return KinematicEstimate(
        p_leaf=p[:, list(LEAF_JOINTS)],
        p=p,
        theta=rot6d_from_matrix(joint_rot),
        v_key=vel[:, list(KEY_JOINTS)],
    )


# --------------------------------------------------------------------------- #
# loss
# --------------------------------------------------------------------------- #

def _check_pair(pred, truth):
    for n in FIELDS:
        a, b = getattr(pred, n), getattr(truth, n)
        if a.shape != b.shape:
            raise ShapeMismatch(f"{n}: {a.shape} vs {b.shape}")


def kin_loss(pred, truth):
    """Sum of the four per-field mean squared errors."""
    _check_pair(pred, truth)
    return float(sum(np.mean((getattr(pred, n) - getattr(truth, n)) ** 2) for n in FIELDS))


def kin_loss_torch(pred, truth):
    """Torch twin of :func:`kin_loss` over dicts of tensors keyed by field name."""
    total = 0.0
    for n in FIELDS:
        if pred[n].shape != truth[n].shape:
            raise ShapeMismatch(f"{n}: {tuple(pred[n].shape)} vs {tuple(truth[n].shape)}")
        total = total + torch.mean((pred[n] - truth[n]) ** 2)
    return total


# --------------------------------------------------------------------------- #
# network
# --------------------------------------------------------------------------- #

class RecurrentStage(nn.Module):
    """Linear -> ReLU -> single-layer LSTM -> Linear."""

    def __init__(self, n_input, n_output, n_hidden):
        super().__init__()
        self.n_hidden = n_hidden
        self.inp = nn.Linear(n_input, n_hidden)
        self.rnn = nn.LSTM(n_hidden, n_hidden, num_layers=1, batch_first=True)
        self.out = nn.Linear(n_hidden, n_output)
        self.init_proj = nn.Linear(ESTIMATE_WIDTH, 2 * n_hidden)

    def initial_state(self, truth_flat):
        hc = self.init_proj(truth_flat)
        h, c = hc[..., : self.n_hidden], hc[..., self.n_hidden:]
        return h.unsqueeze(0).contiguous(), c.unsqueeze(0).contiguous()

    def zero_state(self, batch, dtype):
        z = torch.zeros(1, batch, self.n_hidden, dtype=dtype)
        return z, z.clone()

    def forward(self, x, state):
        y, state = self.rnn(torch.relu(self.inp(x)), state)
        return self.out(y), state


def stage_inputs(stage, obs, p_leaf=None, p=None):
    """Input composition of each stage (kept in one place on purpose)."""
    if stage == "lp":
        return obs
    if stage == "fp":
        return torch.cat([obs, p_leaf], dim=-1)
    if stage in ("fa", "kv"):
        return torch.cat([obs, p], dim=-1)
    raise KeyError(stage)


class StagedKinematicsNet(nn.Module):
    STAGES = ("lp", "fp", "fa", "kv")

    def __init__(self, obs_width=58, hidden=64):
        super().__init__()
        self.obs_width = obs_width
        self.hidden = hidden
        leaf, full, ang, vel = (FIELD_SIZES[n] for n in FIELDS)
        self.lp = RecurrentStage(obs_width, leaf, hidden)
        self.fp = RecurrentStage(obs_width + leaf, full, hidden)
        self.fa = RecurrentStage(obs_width + full, ang, hidden)
        self.kv = RecurrentStage(obs_width + full, vel, hidden)
        self.double()

    def stages(self):
        return [getattr(self, s) for s in self.STAGES]

    def init_hidden(self, truth_flat=None, batch=1):
        """Per-stage (h, c) seeded from first-frame truth, or zeros."""
        if truth_flat is None:
            return [s.zero_state(batch, torch.float64) for s in self.stages()]
        return [s.initial_state(truth_flat) for s in self.stages()]

    def forward(self, obs, hidden):
        """``obs`` (B, T, width) -> dict of (B, T, n) outputs and new hidden list."""
        if obs.shape[-1] != self.obs_width:
            raise ShapeMismatch(f"observation width {obs.shape[-1]} != {self.obs_width}")
        p_leaf, h_lp = self.lp(stage_inputs("lp", obs), hidden[0])
        p, h_fp = self.fp(stage_inputs("fp", obs, p_leaf=p_leaf), hidden[1])
        theta, h_fa = self.fa(stage_inputs("fa", obs, p=p), hidden[2])
        v_key, h_kv = self.kv(stage_inputs("kv", obs, p=p), hidden[3])
        out = {"p_leaf": p_leaf, "p": p, "theta": theta, "v_key": v_key}
        return out, [h_lp, h_fp, h_fa, h_kv]


def _outputs_to_estimate(out):
    arrs = {}
    for n in FIELDS:
        a = out[n].detach().cpu().numpy()
        arrs[n] = a.reshape(a.shape[:-1] + FIELD_SHAPES[n])
    return KinematicEstimate(**arrs)


def _estimate_to_tensors(est):
    lead = est.p.shape[:-2]
    return {n: torch.as_tensor(getattr(est, n).reshape(lead + (-1,)), dtype=torch.float64) for n in FIELDS}


def staged_forward(net, obs, hidden):
    """One frame: (SensorObservation or flat vector, hidden) -> (KinematicEstimate, hidden).

    The returned 6D rotations are raw network outputs; decode them with
    :meth:`KinematicEstimate.rotations`.
    """
    vec = obs.flatten() if hasattr(obs, "flatten") and not isinstance(obs, np.ndarray) else obs
    vec = as_float_array(vec, "observation")
    if vec.shape != (net.obs_width,):
        raise ShapeMismatch(f"observation shape {vec.shape} != ({net.obs_width},)")
    with torch.no_grad():
        x = torch.as_tensor(vec, dtype=torch.float64).view(1, 1, -1)
        out, hidden = net(x, hidden)
    est = _outputs_to_estimate(out)
    return est[0, 0], hidden


def init_hidden(net, first_frame_truth=None):
    """Hidden state for a new sequence; call once, before the first frame."""
    if first_frame_truth is None:
        return net.init_hidden(None)
    flat = torch.as_tensor(first_frame_truth.flatten(), dtype=torch.float64).view(1, -1)
    with torch.no_grad():
        return net.init_hidden(flat)


# --------------------------------------------------------------------------- #
# checkpoint container
# --------------------------------------------------------------------------- #

def save_checkpoint(net, path):
    """Write parameters as versioned JSON: names, shapes and float64 values."""
    tensors = [
        {"name": k, "shape": list(v.shape), "values": v.detach().cpu().numpy().astype(np.float64).ravel().tolist()}
        for k, v in net.state_dict().items()
    ]
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": {"obs_width": net.obs_width, "hidden": net.hidden},
        "tensors": tensors,
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a kinematics checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    net = StagedKinematicsNet(**doc["config"])
    state = {
        t["name"]: torch.tensor(t["values"], dtype=torch.float64).reshape(t["shape"])
        for t in doc["tensors"]
    }
    net.load_state_dict(state)
    return net


# --------------------------------------------------------------------------- #
# estimator API
# --------------------------------------------------------------------------- #

def _as_sequences(X):
    if isinstance(X, np.ndarray) and X.ndim == 2:
        return [X]
    return [as_float_array(x, "X") for x in X]


def _as_truths(y):
    if isinstance(y, KinematicEstimate):
        return [y]
    out = []
    for item in y:
        out.append(item if isinstance(item, KinematicEstimate) else KinematicEstimate.from_flat(item))
    return out


class StagedKinematicEstimator(RegressorMixin, BaseEstimator):
    """scikit-learn front-end for :class:`StagedKinematicsNet`.

    ``fit`` takes a list of observation matrices (T, width) and the matching
    :class:`KinematicEstimate` sequences; it trains every stage jointly with
    Adam on the summed per-field MSE. ``predict`` runs the stages causally.
    """

    def __init__(self, hidden=64, n_steps=200, lr=1e-2, seed=0, init_from_truth=True, obs_width=None):
        self.hidden = hidden
        self.n_steps = n_steps
        self.lr = lr
        self.seed = seed
        self.init_from_truth = init_from_truth
        self.obs_width = obs_width

    def _build(self, width):
        torch.manual_seed(self.seed)
        return StagedKinematicsNet(obs_width=width, hidden=self.hidden)

    def fit(self, X, y):
        seqs = _as_sequences(X)
        truths = _as_truths(y)
        if len(seqs) != len(truths):
            raise ShapeMismatch("X and y hold different numbers of sequences")
        width = self.obs_width or seqs[0].shape[1]
        self.net_ = self._build(width)
        opt = torch.optim.Adam(self.net_.parameters(), lr=self.lr)
        batches = [
            (torch.as_tensor(x, dtype=torch.float64).unsqueeze(0),
             {k: v.unsqueeze(0) for k, v in _estimate_to_tensors(tr).items()},
             torch.as_tensor(tr[0].flatten(), dtype=torch.float64).view(1, -1))
            for x, tr in zip(seqs, truths)
        ]
        self.loss_curve_ = []
        for _ in range(self.n_steps):
            opt.zero_grad()
            total = 0.0
            for x, target, first in batches:
                hidden = self.net_.init_hidden(first if self.init_from_truth else None)
                out, _ = self.net_(x, hidden)
                total = total + kin_loss_torch(out, target)
            total = total / len(batches)
            total.backward()
            opt.step()
            self.loss_curve_.append(float(total.detach()))
        self.n_features_in_ = width
        return self

    def loss(self, X, y, first_frames=None):
        pred = self.predict(X, first_frames)
        preds = pred if isinstance(pred, list) else [pred]
        truths = _as_truths(y)
        return float(np.mean([kin_loss(p, t) for p, t in zip(preds, truths)]))

    def predict(self, X, first_frames=None):
        """Estimates for one sequence (returns a KinematicEstimate) or a list."""
        check_is_fitted(self, "net_")
        single = isinstance(X, np.ndarray) and X.ndim == 2
        seqs = _as_sequences(X)
        if first_frames is None:
            first_frames = [None] * len(seqs)
        elif isinstance(first_frames, KinematicEstimate):
            first_frames = [first_frames]
        out = []
        for x, first in zip(seqs, first_frames):
            hidden = init_hidden(self.net_, first if self.init_from_truth else None)
            with torch.no_grad():
                res, _ = self.net_(torch.as_tensor(x, dtype=torch.float64).unsqueeze(0), hidden)
            out.append(_outputs_to_estimate(res)[0])
        return out[0] if single else out

    def score(self, X, y, sample_weight=None):
        return -self.loss(X, y)


# --------------------------------------------------------------------------- #
# oracle source and history buffer
# --------------------------------------------------------------------------- #

class OracleEstimator:
    """Replays ground truth, optionally with Gaussian noise, through the step API.

    ``noise_std`` maps field names to standard deviations; 6D rotations are
    re-orthonormalised after perturbation so they always decode.
    """

    def __init__(self, truth, noise_std=None, seed=0):
        self.truth = truth
        self.noise_std = dict(noise_std or {})
        self._rng = np.random.default_rng(seed)

    def init_hidden(self, first_frame_truth=None):
        return 0

    def step(self, obs, hidden):
        t = int(hidden)
        return self._perturb(self.truth[t]), t + 1

    def predict(self, X=None, first_frames=None):
        return KinematicEstimate.stack([self._perturb(self.truth[t]) for t in range(len(self.truth))])

    def _perturb(self, est):
        if not self.noise_std:
            return KinematicEstimate(*(getattr(est, n).copy() for n in FIELDS))
        vals = {}
        for n in FIELDS:
            arr = getattr(est, n)
            std = float(self.noise_std.get(n, 0.0))
            vals[n] = arr + self._rng.normal(0.0, std, arr.shape) if std > 0 else arr.copy()
        vals["theta"] = rot6d_from_matrix(matrix_from_rot6d(vals["theta"]))
        return KinematicEstimate(**vals)


def oracle_estimator(truth, noise_std=None, seed=0):
    return OracleEstimator(truth, noise_std, seed)


@dataclass
class HistoryEntry:
    frame: int
    p: np.ndarray
    theta: np.ndarray
    v_key: np.ndarray
    sim_root: np.ndarray | None = None


@dataclass
class HistoryBuffer:
    """Ring buffer of the last ``capacity`` kinematic predictions.

    Each entry may also carry the simulated root position of that frame,
    which fall recovery uses as its integration base.
    """

    capacity: int = 100
    _entries: deque = field(default=None, repr=False)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        self._entries = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self._entries)

    def push(self, frame, p, theta, v_key, sim_root=None):
        if self._entries and frame <= self._entries[-1].frame:
            raise ValueError("frames must be pushed in increasing order")
        self._entries.append(HistoryEntry(int(frame), np.array(p, dtype=np.float64),
                                          np.array(theta, dtype=np.float64),
                                          np.array(v_key, dtype=np.float64),
                                          None if sim_root is None else np.array(sim_root, dtype=np.float64)))

    def push_estimate(self, frame, est, sim_root=None):
        self.push(frame, est.p, est.theta, est.v_key, sim_root)

    def clear(self):
        self._entries.clear()

    def segment(self, t=None, n=None):
        """The ``n`` (default: capacity) most recent entries ending at frame ``t``."""
        n = self.capacity if n is None else n
        if len(self._entries) < n:
            raise Underflow(f"buffer holds {len(self._entries)} frames, {n} requested")
        entries = list(self._entries)
        if t is not None:
            idx = [e.frame for e in entries]
            if t not in idx:
                raise Underflow(f"frame {t} not in buffer")
            entries = entries[: idx.index(t) + 1]
            if len(entries) < n:
                raise Underflow(f"only {len(entries)} frames up to {t}, {n} requested")
        return entries[-n:]


def history_segment(buf, t=None):
    return buf.segment(t)


def history_push(buf, frame, est, sim_root=None):
    buf.push_estimate(frame, est, sim_root)
