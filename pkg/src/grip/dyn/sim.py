"""Contact-aware rigid-body integrator for the articulated humanoid.

Generalized coordinates: root position and orientation (unless the root is
fixed) plus one rotation per ball joint. Generalized velocities are the root
linear velocity in the world frame, the root angular velocity in its body
frame, and each joint's angular velocity relative to its parent, expressed in
the joint's own frame. Dense Jacobians are fine at 24 bodies.

Stiff terms (PD drive, contact springs and dampers, regularised friction) are
treated linearly implicitly inside the semi-implicit Euler step, which keeps
light distal bodies stable at millisecond substeps.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import NumericalDivergence
from ..rotmath import GRAVITY
from ..statediff import SimState
from .terrain import FLAT

DEFAULT_SUBSTEPS = 10
POSITION_BOUND = 1e4
VELOCITY_BOUND = 1e3


def _skew(v):
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _cross(a, b):
    # np.cross is slow for small batches
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def _expm(w):
    """Rodrigues formula, batched over leading axes."""
    theta = np.linalg.norm(w, axis=-1)[..., None, None]
    k = _skew(w)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta ** 2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta ** 2 / 24.0, (1.0 - np.cos(safe)) / safe ** 2)
    return np.eye(3) + a * k + b * (k @ k)


def _logm(r):
    """Rotation vectors of a batch of rotation matrices."""
    from scipy.spatial.transform import Rotation

    flat = r.reshape(-1, 3, 3)
    return Rotation.from_matrix(flat).as_rotvec().reshape(r.shape[:-2] + (3,))


@dataclass
class GenState:
    """Generalized state: root position, per-joint local rotations, velocities."""

    root_pos: np.ndarray
    local_rot: np.ndarray  # (n, 3, 3); entry 0 is the root's global rotation
    u: np.ndarray  # (ndof,)

    def copy(self):
        return GenState(self.root_pos.copy(), self.local_rot.copy(), self.u.copy())


@dataclass
class Kinematics:
    rot: np.ndarray
    pos: np.ndarray
    angvel: np.ndarray
    linvel: np.ndarray
    com: np.ndarray
    com_vel: np.ndarray
    # accelerations at zero generalized acceleration
    alpha0: np.ndarray
    com_acc0: np.ndarray


@dataclass
class StepInfo:
    contact_normal: np.ndarray = field(default_factory=lambda: np.zeros(0))
    foot_force: np.ndarray = field(default_factory=lambda: np.zeros(2))
    joint_torque: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))


def _local_velocities(model, gs):
    n = model.n_bodies
    wl = np.zeros((n, 3))
    rot = gs.u[model.n_trans:].reshape(-1, 3)
    wl[model.rot_owners] = rot
    v0 = np.zeros(3) if model.fixed_root else gs.u[:3]
    return v0, wl


def forward(model, gs):
    """Poses, velocities and zero-acceleration bias terms of every body."""
    n = model.n_bodies
    par = model.parent_arr
    rot = np.empty((n, 3, 3))
    pos = np.empty((n, 3))
    v0, wl = _local_velocities(model, gs)
    rot[0] = gs.local_rot[0]
    pos[0] = gs.root_pos
    omega_rel = np.empty((n, 3))
    angvel = np.empty((n, 3))
    linvel = np.empty((n, 3))
    alpha0 = np.zeros((n, 3))
    acc0 = np.zeros((n, 3))
    omega_rel[0] = rot[0] @ wl[0]
    angvel[0] = omega_rel[0]
    linvel[0] = v0
    for lvl in model.levels:
        p = par[lvl]
        r = np.einsum("nij,nj->ni", rot[p], model.offsets[lvl])
        rot[lvl] = rot[p] @ gs.local_rot[lvl]
        pos[lvl] = pos[p] + r
        omega_rel[lvl] = np.einsum("nij,nj->ni", rot[lvl], wl[lvl])
        wp = angvel[p]
        angvel[lvl] = wp + omega_rel[lvl]
        linvel[lvl] = linvel[p] + _cross(wp, r)
        alpha0[lvl] = alpha0[p] + _cross(angvel[lvl], omega_rel[lvl])
        acc0[lvl] = acc0[p] + _cross(alpha0[p], r) + _cross(wp, _cross(wp, r))
    s = np.einsum("nij,nj->ni", rot, model.coms)
    com = pos + s
    com_vel = linvel + _cross(angvel, s)
    com_acc0 = acc0 + _cross(alpha0, s) + _cross(angvel, _cross(angvel, s))
    return Kinematics(rot, pos, angvel, linvel, com, com_vel, alpha0, com_acc0)


def point_jacobian(model, kin, bodies, points):
    """Linear-velocity Jacobians (k, 3, ndof) of world points rigidly attached to ``bodies``."""
    owners = model.rot_owners
    a = model.ancestors[np.asarray(bodies)][:, owners].astype(np.float64)  # (k, K)
    diff = points[:, None, :] - kin.pos[owners][None]
    blocks = -_skew(diff) @ kin.rot[owners][None]  # (k, K, 3, 3)
    blocks *= a[..., None, None]
    k = len(points)
    jac = np.zeros((k, 3, model.ndof))
    jac[:, :, model.n_trans:] = blocks.transpose(0, 2, 1, 3).reshape(k, 3, -1)
    if not model.fixed_root:
        jac[:, :, :3] = np.eye(3)
    return jac


def angular_jacobian(model, kin):
    owners = model.rot_owners
    n = model.n_bodies
    a = model.ancestors[:, owners].astype(np.float64)
    blocks = a[..., None, None] * kin.rot[owners][None]
    jac = np.zeros((n, 3, model.ndof))
    jac[:, :, model.n_trans:] = blocks.transpose(0, 2, 1, 3).reshape(n, 3, -1)
    return jac


def mass_matrix_and_bias(model, kin, gravity=GRAVITY):
    jv = point_jacobian(model, kin, np.arange(model.n_bodies), kin.com)
    jw = angular_jacobian(model, kin)
    iw = kin.rot @ model.inertias @ np.swapaxes(kin.rot, -1, -2)
    m = model.masses
    nd = model.ndof
    jv2 = jv.reshape(-1, nd)
    jw2 = jw.reshape(-1, nd)
    mass = (jv2.T * np.repeat(m, 3)) @ jv2 + jw2.T @ (iw @ jw).reshape(-1, nd)
    lin = m[:, None] * (kin.com_acc0 - gravity)
    iwomega = np.einsum("bij,bj->bi", iw, kin.angvel)
    ang = np.einsum("bij,bj->bi", iw, kin.alpha0) + _cross(kin.angvel, iwomega)
    bias = jv2.T @ lin.ravel() + jw2.T @ ang.ravel()
    return mass, bias


def kinetic_energy(model, gs):
    kin = forward(model, gs)
    mass, _ = mass_matrix_and_bias(model, kin)
    return 0.5 * gs.u @ mass @ gs.u


def total_energy(model, gs, gravity=GRAVITY):
    kin = forward(model, gs)
    pe = -float(np.sum(model.masses * (kin.com @ gravity)))
    return kinetic_energy(model, gs) + pe


class Integrator:
    """Advances a :class:`GenState` by one control step made of substeps."""

    def __init__(self, model, terrain=FLAT, gravity=GRAVITY, substeps=DEFAULT_SUBSTEPS):
        if substeps < 1:
            raise ValueError("substeps must be positive")
        self.model = model
        self.terrain = terrain
        self.gravity = np.asarray(gravity, dtype=np.float64)
        self.substeps = substeps

    # -------------------------------------------------------------- contact --
    def _contacts(self, kin):
        m = self.model
        if len(m.contact_local) == 0:
            return None
        body = m.contact_body
        centre = kin.pos[body] + np.einsum("kij,kj->ki", kin.rot[body], m.contact_local[:, :3])
        radius = m.contact_local[:, 3]
        bottom = centre.copy()
        bottom[:, 2] -= radius
        surface = self.terrain.height(bottom[:, 0], bottom[:, 1])
        depth = surface - bottom[:, 2]
        active = depth > 0
        if not np.any(active):
            return None
        idx = np.flatnonzero(active)
        pts = bottom[idx]
        b = body[idx]
        vel = kin.linvel[b] + _cross(kin.angvel[b], pts - kin.pos[b])
        jac = point_jacobian(m, kin, b, pts)
        return idx, b, depth[idx], vel, jac

    # ----------------------------------------------------------------- step --
    def substep(self, gs, h, torque=None, pd_target=None):
        m = self.model
        kin = forward(m, gs)
        mass, bias = mass_matrix_and_bias(m, kin, self.gravity)
        nd = m.ndof
        rhs = -bias
        lhs = mass.copy()

        nt = m.n_trans
        owner_of = np.concatenate([np.zeros(nt, dtype=int), np.repeat(m.rot_owners, 3)])
        actuated = owner_of != 0
        tau_expl = np.zeros(nd)
        if torque is not None:
            tau = np.asarray(torque, dtype=np.float64).reshape(m.n_bodies, 3)
            tau_expl[nt:] = tau[m.rot_owners].ravel()
            tau_expl[~actuated] = 0.0
        drive_diag = np.zeros(nd)
        drive_rhs = np.zeros(nd)
        if pd_target is not None:
            err = _logm(np.swapaxes(gs.local_rot[m.rot_owners], -1, -2) @ pd_target[m.rot_owners]).ravel()
            kp = m.kp[owner_of]
            kd = m.kd[owner_of]
            g = kp * h + kd
            e_full = np.concatenate([np.zeros(nt), err])
            drive_rhs = np.where(actuated, kp * e_full - g * gs.u, 0.0)
            drive_diag = np.where(actuated, h * g, 0.0)
        limit = m.torque_limit[owner_of]

        cp = m.contact
        con = self._contacts(kin)
        if con is not None:
            idx, b, depth, vel, jac = con
            jz = jac[:, 2, :]
            jt = jac[:, :2, :]
            gain = np.full(len(idx), cp.stiffness * h + cp.damping)
            fn0 = cp.stiffness * depth - gain * vel[:, 2]
            vt = vel[:, :2]
            speed = np.linalg.norm(vt, axis=1)
            eta = cp.friction * np.maximum(fn0, 0.0) / np.maximum(speed, cp.slip_velocity)
        live = None if con is None else np.ones(len(idx), dtype=bool)
        clamped = np.zeros(nd, dtype=bool)

        for _ in range(6):
            a = lhs.copy()
            r = rhs + tau_expl
            free_drive = ~clamped
            a[np.diag_indices(nd)] += np.where(free_drive, drive_diag, 0.0)
            r += np.where(free_drive, drive_rhs, 0.0)
            r += np.where(clamped, np.sign(drive_rhs) * limit, 0.0)
            if con is not None and live.any():
                l = live
                jzl = jz[l]
                jtl = jt[l].reshape(-1, nd)
                etal = np.repeat(eta[l], 2)
                a += h * ((jzl.T * gain[l]) @ jzl + (jtl.T * etal) @ jtl)
                r += jzl.T @ fn0[l] - jtl.T @ (etal * vt[l].ravel())
            udot = np.linalg.solve(a, r)
            changed = False
            if pd_target is not None:
                tau_drive = drive_rhs - drive_diag * udot
                over = free_drive & actuated & (np.abs(tau_drive) > limit)
                if over.any():
                    # freeze the sign of the saturated drive torque
                    drive_rhs = np.where(over, tau_drive, drive_rhs)
                    clamped |= over
                    changed = True
            if con is not None:
                fn = fn0 - h * gain * (jz @ udot)
                neg = live & (fn < 0)
                if neg.any():
                    live &= ~neg
                    changed = True
            if not changed:
                break

        u_new = gs.u + h * udot
        info = StepInfo()
        if pd_target is not None:
            tau_drive = np.where(clamped, np.sign(drive_rhs) * limit, drive_rhs - drive_diag * udot)
            info.joint_torque = (tau_drive + tau_expl)[nt:].reshape(-1, 3)
        else:
            info.joint_torque = tau_expl[nt:].reshape(-1, 3)
        normal = np.zeros(len(m.contact_local))
        if con is not None:
            fn = np.where(live, fn0 - h * gain * (jz @ udot), 0.0)
            normal[idx] = np.maximum(fn, 0.0)
        info.contact_normal = normal
        info.foot_force = np.array([
            normal[np.isin(m.contact_body, list(f))].sum() for f in m.foot_bodies
        ]) if m.foot_bodies else np.zeros(0)

        nxt = gs.copy()
        nxt.u = u_new
        _, wl = _local_velocities(m, nxt)
        if not m.fixed_root:
            nxt.root_pos = gs.root_pos + h * u_new[:3]
            nxt.local_rot[0] = gs.local_rot[0] @ _expm(h * wl[0])
        nxt.local_rot[1:] = gs.local_rot[1:] @ _expm(h * wl[1:])
        self._check(nxt)
        return nxt, info

    def step(self, gs, dt, torque=None, pd_target=None):
        """One control step; torques and PD targets are held over the substeps.

        Returns the new state and the substep-averaged contact information.
        """
        h = dt / self.substeps
        normals = np.zeros(len(self.model.contact_local))
        feet = np.zeros(len(self.model.foot_bodies))
        torques = 0.0
        for _ in range(self.substeps):
            gs, info = self.substep(gs, h, torque, pd_target)
            normals += info.contact_normal
            feet += info.foot_force
            torques = torques + info.joint_torque
        k = float(self.substeps)
        return gs, StepInfo(normals / k, feet / k, torques / k)

    @staticmethod
    def _check(gs):
        vals = (gs.root_pos, gs.u, gs.local_rot)
        if not all(np.all(np.isfinite(v)) for v in vals):
            raise NumericalDivergence("non-finite simulator state")
        if np.abs(gs.root_pos).max() > POSITION_BOUND or np.abs(gs.u).max() > VELOCITY_BOUND:
            raise NumericalDivergence("simulator state left its sanity bounds")


# ------------------------------------------------------------ conversions --
def to_sim_state(model, gs):
    kin = forward(model, gs)
    return SimState(kin.pos, kin.rot, kin.linvel, kin.angvel)


def from_sim_state(model, state):
    """Generalized state realising the global joint rotations and velocities of ``state``.

    Joint offsets come from the model, so non-root positions in ``state`` are
    only consistent if they were produced by the same model.
    """
    rot = np.asarray(state.joint_rot, dtype=np.float64)
    par = model.parent_arr
    local = rot.copy()
    local[1:] = np.swapaxes(rot[par[1:]], -1, -2) @ rot[1:]
    omega = np.asarray(state.joint_angvel, dtype=np.float64)
    wl = np.zeros_like(omega)
    wl[0] = rot[0].T @ omega[0]
    wl[1:] = np.einsum("nji,nj->ni", rot[1:], omega[1:] - omega[par[1:]])
    parts = []
    if not model.fixed_root:
        parts.append(np.asarray(state.joint_linvel[0], dtype=np.float64))
    parts.append(wl[model.rot_owners].ravel())
    return GenState(np.array(state.joint_pos[0], dtype=np.float64), local, np.concatenate(parts))


def rest_state(model, root_pos=None, root_rot=None):
    n = model.n_bodies
    local = np.tile(np.eye(3), (n, 1, 1))
    if root_rot is not None:
        local[0] = root_rot
    pos = np.zeros(3) if root_pos is None else np.asarray(root_pos, dtype=np.float64)
    return GenState(pos, local, np.zeros(model.ndof))


def step(state, torques, terrain, model, dt, substeps=DEFAULT_SUBSTEPS):
    """Advance a :class:`SimState` by ``dt`` under explicit joint torques.

    ``torques`` is (n_bodies, 3) in each joint's local frame (root row
    ignored) or None for a passive step.
    """
    gs = from_sim_state(model, state)
    gs, _ = Integrator(model, terrain, substeps=substeps).step(gs, dt, torque=torques)
    return to_sim_state(model, gs)
