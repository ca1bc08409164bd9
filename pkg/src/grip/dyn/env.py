"""Closed-loop tracking environment and rollout collection.

Policy optimisation is not part of this package; ``rollout`` collects the
observations and rewards a trainer would consume. A policy is any callable
``policy(obs, kin, frame) -> local PD targets (24, 3, 3) or None``; None
leaves the humanoid unactuated for that frame.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import Underflow
from ..insole import SensorObservation
from ..kinnet import HistoryBuffer
from ..rotmath import DT, heading_rotation, matrix_from_rot6d
from ..skeleton import ROOT, local_from_global
from ..statediff import FULL_MASK, SimState, StateDifferenceEncoder
from .fall import FallRecoveryConfig, detect_fall, early_termination, recover
from .model import smpl_humanoid
from .observation import build_observation, sample_height_map, self_observation
from .reward import (FixtureDiscriminator, RewardConfig, amp_reward, energy_penalty,
                     imitation_reward, total_reward)
from .sim import DEFAULT_SUBSTEPS, Integrator, from_sim_state, to_sim_state
from .terrain import FLAT


def fixture_policy(obs, kin, frame):
    """PD toward the estimated joint rotations (the FA output)."""
    return local_from_global(matrix_from_rot6d(kin.theta))


def passive_policy(obs, kin, frame):
    return None


@dataclass
class Rollout:
    joint_pos: np.ndarray
    joint_rot: np.ndarray
    foot_force: np.ndarray
    rewards: np.ndarray  # (T, 4): r_amp, r_imit, r_energy, total
    fall_frames: list = field(default_factory=list)
    recoveries: list = field(default_factory=list)  # (frame, first replaced, last replaced)
    terminations: list = field(default_factory=list)
    observations: np.ndarray | None = None

    def __len__(self):
        return len(self.joint_pos)

    @property
    def fell(self):
        return bool(self.fall_frames)


def kinematic_reference(kin, root):
    """SimState-shaped reference from an estimate and a global root position."""
    rot = matrix_from_rot6d(kin.theta)
    pos = kin.p + root
    vel = np.tile(kin.v_key[-1], (len(pos), 1))
    return SimState(pos, rot, vel, np.zeros_like(pos))


def initial_state(model, kin, root_xy, terrain=FLAT):
    """Pose the model at the estimate's rotations, resting on the terrain."""
    from .fall import _ground_clearance, _pose_from_theta

    root = np.array([root_xy[0], root_xy[1], 0.0])
    rot, pos = _pose_from_theta(kin.theta, root, model.offsets)
    pos[:, 2] -= _ground_clearance(model, rot, pos, terrain)
    n = len(pos)
    return SimState(pos, rot, np.zeros((n, 3)), np.zeros((n, 3)))


class TrackingEnv:
    """One simulated humanoid tracking a stream of kinematic estimates."""

    def __init__(self, model=None, terrain=FLAT, mask=FULL_MASK, reward_cfg=RewardConfig(),
                 fall_cfg=FallRecoveryConfig(), discriminator=None, dt=DT,
                 substeps=DEFAULT_SUBSTEPS, keep_observations=False):
        self.model = smpl_humanoid() if model is None else model
        self.terrain = terrain
        self.mask = mask
        self.reward_cfg = reward_cfg
        self.fall_cfg = fall_cfg
        self.disc = FixtureDiscriminator(window=reward_cfg.window) if discriminator is None else discriminator
        self.dt = dt
        self.integrator = Integrator(self.model, terrain, substeps=substeps)
        self.keep_observations = keep_observations

    def reset(self, first_kin, root_xy=(0.0, 0.0)):
        state = initial_state(self.model, first_kin, root_xy, self.terrain)
        self.gs = from_sim_state(self.model, state)
        self.encoder = StateDifferenceEncoder(self.mask, self.dt)
        self.encoder.reset(state.root_pos)
        self.buffer = HistoryBuffer(self.fall_cfg.buffer_frames)
        self.window = deque(maxlen=self.reward_cfg.window)
        self.heading = None
        return state

    def _disc_prob_and_logit(self, self_obs):
        self.window.append(self_obs)
        frames = list(self.window)
        frames = [frames[0]] * (self.window.maxlen - len(frames)) + frames
        logit = float(self.disc.logit(np.stack(frames)[None])[0])
        return 1.0 / (1.0 + np.exp(-logit)), logit

    def rollout(self, estimates, sensor_obs, policy=fixture_policy, root_xy=(0.0, 0.0)):
        """Run the closed loop over a sequence of estimates and sensor observations."""
        n = len(estimates)
        if len(sensor_obs) != n:
            raise ValueError("estimates and sensor observations differ in length")
        state = self.reset(estimates[0], root_xy)
        out_pos = np.empty((n, 24, 3))
        out_rot = np.empty((n, 24, 3, 3))
        feet = np.zeros((n, 2))
        rewards = np.zeros((n, 4))
        obs_log = [] if self.keep_observations else None
        roll = Rollout(out_pos, out_rot, feet, rewards)
        for t in range(n):
            kin = estimates[t]
            sen = sensor_obs[t]
            if not isinstance(sen, SensorObservation):
                sen = SensorObservation.unflatten(sen)
            self.heading = heading_rotation(state.root_rot, previous=self.heading)
            diff = self.encoder.transform(kin, state)
            hmap = sample_height_map(self.terrain, state.root_pos, heading=self.heading)
            obs = build_observation(sen, diff, state, hmap, self.mask, heading=self.heading)
            if obs_log is not None:
                obs_log.append(obs)

            target = policy(obs, kin, t)
            self.gs, info = self.integrator.step(self.gs, self.dt, pd_target=target)
            state = to_sim_state(self.model, self.gs)
            out_pos[t] = state.joint_pos
            out_rot[t] = state.joint_rot
            feet[t] = info.foot_force

            prob, logit = self._disc_prob_and_logit(self_observation(state, self.heading).ravel())
            ref = kinematic_reference(kin, self.encoder.kin_root)
            local_w = self.gs.u[self.model.n_trans:].reshape(-1, 3)
            terms = total_reward(
                amp_reward(logit),
                imitation_reward(ref, state, self.reward_cfg),
                energy_penalty(info.joint_torque, local_w, self.reward_cfg, t),
                self.reward_cfg,
            )
            rewards[t] = (terms.r_amp, terms.r_imit, terms.r_energy, terms.total)
            if early_termination(ref.joint_pos - ref.joint_pos[ROOT], state.joint_pos - state.root_pos,
                                 self.fall_cfg):
                roll.terminations.append(t)

            if detect_fall(state.root_pos[2], prob, self.fall_cfg):
                roll.fall_frames.append(t)
                state = self._recover(t, kin, roll, out_pos, out_rot)
                out_pos[t] = state.joint_pos
                out_rot[t] = state.joint_rot
            self.buffer.push_estimate(t, kin, sim_root=state.root_pos)
        if obs_log is not None:
            roll.observations = np.array(obs_log)
        return roll

    def _recover(self, t, kin, roll, out_pos, out_rot):
        cfg = self.fall_cfg
        n = min(len(self.buffer), cfg.buffer_frames)
        if n < 1:
            raise Underflow("no buffered predictions to recover from")
        if n < cfg.buffer_frames:
            cfg = FallRecoveryConfig(cfg.tau_z, cfg.tau_rho, n, cfg.tau_e)
        state, seg = recover(None, self.buffer, cfg, kin_now=kin, model=self.model,
                             terrain=self.terrain, dt=self.dt)
        out_pos[seg.frames] = seg.joint_pos
        out_rot[seg.frames] = seg.joint_rot
        roll.recoveries.append((t, int(seg.frames[0]), int(seg.frames[-1])))
        self.gs = from_sim_state(self.model, state)
        self.window.clear()
        self.buffer.clear()
        return to_sim_state(self.model, self.gs)


def success_from_rollouts(rollouts):
    return [not r.fell for r in rollouts]
