"""Articulated humanoid description and its text file format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import skeleton as sk

MODEL_FORMAT = "grip-humanoid"
MODEL_VERSION = 1

REFERENCE_MASS = 70.0
DEFAULT_KP = 300.0
DEFAULT_KD = 30.0
DEFAULT_TORQUE_LIMIT = 200.0


@dataclass
class ContactParams:
    stiffness: float = 3e4  # N/m per contact point
    damping: float = 3e2  # N s/m per contact point
    friction: float = 0.9
    slip_velocity: float = 0.01  # m/s, viscous regularisation of Coulomb friction


@dataclass
class HumanoidModel:
    """Tree of rigid bodies, one per joint; every non-root joint is a ball joint.

    Per-body quantities are expressed in the body's own joint frame. Contact
    geometry is a list of spheres ``(x, y, z, radius)`` per body.
    """

    names: list
    parents: list
    offsets: np.ndarray
    masses: np.ndarray
    coms: np.ndarray
    inertias: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    torque_limit: np.ndarray
    contacts: list
    fixed_root: bool = False
    contact: ContactParams = field(default_factory=ContactParams)
    foot_bodies: tuple = ((7, 10), (8, 11))

    def __post_init__(self):
        n = len(self.parents)
        self.offsets = np.asarray(self.offsets, dtype=np.float64).reshape(n, 3)
        self.masses = np.asarray(self.masses, dtype=np.float64).reshape(n)
        self.coms = np.asarray(self.coms, dtype=np.float64).reshape(n, 3)
        self.inertias = np.asarray(self.inertias, dtype=np.float64).reshape(n, 3, 3)
        self.kp = np.asarray(self.kp, dtype=np.float64).reshape(n)
        self.kd = np.asarray(self.kd, dtype=np.float64).reshape(n)
        self.torque_limit = np.asarray(self.torque_limit, dtype=np.float64).reshape(n)
        self.contacts = [np.asarray(c, dtype=np.float64).reshape(-1, 4) for c in self.contacts]
        self.validate()
        self._prepare()

    def validate(self):
        n = len(self.parents)
        if self.parents[0] != -1 or any(not 0 <= p < j for j, p in enumerate(self.parents) if j > 0):
            raise ValueError("parents must form a tree rooted at joint 0 in topological order")
        if np.any(self.masses <= 0):
            raise ValueError("body masses must be positive")
        if np.any(self.kp[1:] < 0) or np.any(self.kd[1:] < 0):
            raise ValueError("gains must be non-negative")
        if np.any(self.torque_limit <= 0):
            raise ValueError("torque limits must be positive")
        if len(self.contacts) != n or len(self.names) != n:
            raise ValueError("per-body lists must have one entry per joint")

    def _prepare(self):
        n = self.n_bodies
        anc = np.zeros((n, n), dtype=bool)
        for b in range(n):
            a = b
            while a >= 0:
                anc[b, a] = True
                a = self.parents[a]
        self.ancestors = anc
        self.rot_owners = np.arange(1 if self.fixed_root else 0, n)
        self.n_trans = 0 if self.fixed_root else 3
        self.ndof = self.n_trans + 3 * len(self.rot_owners)
        pts, owner = [], []
        for b, c in enumerate(self.contacts):
            for row in c:
                pts.append(row)
                owner.append(b)
        self.contact_local = np.array(pts).reshape(-1, 4)
        self.contact_body = np.array(owner, dtype=int)
        # depth-ordered levels for vectorised recursion
        depth = np.zeros(n, dtype=int)
        for j in range(1, n):
            depth[j] = depth[self.parents[j]] + 1
        self.levels = [np.flatnonzero(depth == d) for d in range(1, depth.max() + 1)] if n > 1 else []
        self.parent_arr = np.array(self.parents)

    @property
    def n_bodies(self):
        return len(self.parents)

    @property
    def total_mass(self):
        return float(self.masses.sum())

    def rot_dof_slice(self, joint):
        k = int(np.searchsorted(self.rot_owners, joint))
        if k >= len(self.rot_owners) or self.rot_owners[k] != joint:
            raise KeyError(f"joint {joint} has no rotational dofs")
        start = self.n_trans + 3 * k
        return slice(start, start + 3)

    # ---------------------------------------------------------------- io --
    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "fixed_root": self.fixed_root,
            "contact": vars(self.contact),
            "foot_bodies": [list(f) for f in self.foot_bodies],
            "joints": [
                {
                    "name": self.names[j],
                    "parent": self.parents[j],
                    "offset": self.offsets[j].tolist(),
                    "mass": float(self.masses[j]),
                    "com": self.coms[j].tolist(),
                    "inertia": self.inertias[j].tolist(),
                    "kp": float(self.kp[j]),
                    "kd": float(self.kd[j]),
                    "torque_limit": float(self.torque_limit[j]),
                    "contacts": self.contacts[j].tolist(),
                }
                for j in range(self.n_bodies)
            ],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not a humanoid model file")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        js = d["joints"]
        return cls(
            names=[j["name"] for j in js],
            parents=[int(j["parent"]) for j in js],
            offsets=[j["offset"] for j in js],
            masses=[j["mass"] for j in js],
            coms=[j["com"] for j in js],
            inertias=[j["inertia"] for j in js],
            kp=[j["kp"] for j in js],
            kd=[j["kd"] for j in js],
            torque_limit=[j["torque_limit"] for j in js],
            contacts=[j["contacts"] for j in js],
            fixed_root=bool(d.get("fixed_root", False)),
            contact=ContactParams(**d.get("contact", {})),
            foot_bodies=tuple(tuple(f) for f in d.get("foot_bodies", ((7, 10), (8, 11)))),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def capsule_inertia(mass, axis, radius):
    """Solid-cylinder inertia about the centre for a segment along ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    length = float(np.linalg.norm(axis))
    d = axis / length if length > 1e-9 else np.array([0.0, 0.0, 1.0])
    i_par = 0.5 * mass * radius ** 2
    i_perp = mass * (3 * radius ** 2 + length ** 2) / 12.0
    return i_perp * np.eye(3) + (i_par - i_perp) * np.outer(d, d)


_BODY_MASS = {
    "pelvis": 11.0, "l_hip": 9.0, "r_hip": 9.0, "spine1": 8.0, "l_knee": 3.5, "r_knee": 3.5,
    "spine2": 8.0, "l_ankle": 1.2, "r_ankle": 1.2, "spine3": 6.0, "l_foot": 0.3, "r_foot": 0.3,
    "neck": 1.0, "l_collar": 1.5, "r_collar": 1.5, "head": 5.0, "l_shoulder": 2.0,
    "r_shoulder": 2.0, "l_elbow": 1.2, "r_elbow": 1.2, "l_wrist": 0.4, "r_wrist": 0.4,
    "l_hand": 0.2, "r_hand": 0.2,
}

_BODY_RADIUS = {
    "pelvis": 0.10, "l_hip": 0.07, "r_hip": 0.07, "spine1": 0.10, "l_knee": 0.05, "r_knee": 0.05,
    "spine2": 0.10, "l_ankle": 0.04, "r_ankle": 0.04, "spine3": 0.10, "l_foot": 0.03, "r_foot": 0.03,
    "neck": 0.05, "l_collar": 0.05, "r_collar": 0.05, "head": 0.10, "l_shoulder": 0.045,
    "r_shoulder": 0.045, "l_elbow": 0.04, "r_elbow": 0.04, "l_wrist": 0.035, "r_wrist": 0.035,
    "l_hand": 0.03, "r_hand": 0.03,
}

# gain multipliers for joints that carry the body's weight while standing
_GAIN_GROUP = {"l_hip": 4.0, "r_hip": 4.0, "l_knee": 4.0, "r_knee": 4.0, "l_ankle": 4.0,
               "r_ankle": 4.0, "spine1": 2.0, "spine2": 2.0, "spine3": 2.0, "neck": 1.5}

_LEAF_EXTENT = {"head": [0.0, 0.02, 0.1], "l_hand": [-0.08, 0.0, 0.0], "r_hand": [0.08, 0.0, 0.0],
                "l_foot": [0.0, 0.05, 0.0], "r_foot": [0.0, 0.05, 0.0]}


def _foot_sole(sole_z=-0.07):
    pts = []
    for y in (-0.05, 0.03, 0.11):
        for x in (-0.04, 0.0, 0.04):
            pts.append([x, y, sole_z, 0.0])
    return pts


def smpl_humanoid(total_mass=None, kp=DEFAULT_KP, kd=DEFAULT_KD, torque_limit=DEFAULT_TORQUE_LIMIT,
                  contact=None):
    """24-body humanoid on the SMPL rest skeleton.

    PD gains are the limb defaults scaled by ``total_mass / 70 kg`` and by a
    per-joint multiplier for the weight-bearing joints (legs x4, spine x2);
    the root is unactuated.
    """
    names = list(sk.JOINT_NAMES)
    masses = np.array([_BODY_MASS[n] for n in names])
    if total_mass is not None:
        masses *= total_mass / masses.sum()
    kids = sk.children()
    coms, inertias, contacts = [], [], []
    for j, name in enumerate(names):
        if kids[j]:
            extent = np.mean([sk.REST_OFFSETS[c] for c in kids[j]], axis=0)
        else:
            extent = np.array(_LEAF_EXTENT.get(name, [0.0, 0.0, 0.05]))
        com = 0.5 * extent
        r = _BODY_RADIUS[name]
        coms.append(com)
        inertias.append(capsule_inertia(masses[j], extent, r))
        if name in ("l_ankle", "r_ankle"):
            contacts.append(_foot_sole())
        elif name in ("l_foot", "r_foot"):
            contacts.append([[-0.035, 0.05, -0.01, 0.0], [0.035, 0.05, -0.01, 0.0]])
        else:
            contacts.append([[0.0, 0.0, 0.0, r], list(extent) + [r]])
    scale = masses.sum() / REFERENCE_MASS
    group = np.array([_GAIN_GROUP.get(n, 1.0) for n in names])
    kp_arr = kp * scale * group
    kd_arr = kd * scale * group
    kp_arr[0] = kd_arr[0] = 0.0
    return HumanoidModel(
        names=names, parents=list(sk.PARENTS), offsets=sk.REST_OFFSETS.copy(), masses=masses,
        coms=coms, inertias=inertias, kp=kp_arr, kd=kd_arr,
        torque_limit=np.full(len(names), torque_limit), contacts=contacts,
        contact=contact or ContactParams(),
    )


def single_body(mass=1.0, half_extents=(0.1, 0.1, 0.1), with_contacts=True):
    """One free box, contact points at its bottom corners."""
    hx, hy, hz = half_extents
    inertia = mass / 3.0 * np.diag([hy ** 2 + hz ** 2, hx ** 2 + hz ** 2, hx ** 2 + hy ** 2])
    pts = [[sx * hx, sy * hy, -hz, 0.0] for sx in (-1, 1) for sy in (-1, 1)] if with_contacts else []
    return HumanoidModel(
        names=["box"], parents=[-1], offsets=[[0, 0, 0]], masses=[mass], coms=[[0, 0, 0]],
        inertias=[inertia], kp=[0.0], kd=[0.0], torque_limit=[1.0], contacts=[pts],
        foot_bodies=(),
    )


def pendulum(mass=1.0, length=1.0, radius=0.02):
    """Fixed pivot (body 0, inert) with one passive ball-jointed rod hanging from it."""
    axis = np.array([0.0, 0.0, -length])
    return HumanoidModel(
        names=["pivot", "rod"], parents=[-1, 0], offsets=[[0, 0, 0], [0, 0, 0]],
        masses=[1.0, mass], coms=[[0, 0, 0], 0.5 * axis],
        inertias=[np.eye(3) * 1e-3, capsule_inertia(mass, axis, radius)],
        kp=[0.0, 0.0], kd=[0.0, 0.0], torque_limit=[1.0, 1.0], contacts=[[], []],
        fixed_root=True, foot_bodies=(),
    )
