"""Desk-scale humanoid dynamics, controller observation, rewards and fall recovery."""
from .control import pd_torque
from .env import Rollout, TrackingEnv, fixture_policy, passive_policy
from .fall import FallRecoveryConfig, detect_fall, early_termination, recover
from .model import HumanoidModel, smpl_humanoid
from .observation import build_observation, observation_layout, sample_height_map
from .reward import (FixtureDiscriminator, RewardConfig, amp_reward, discriminator_loss,
                     energy_penalty, imitation_reward, total_reward)
from .sim import Integrator, step
from .terrain import FLAT, Box, Terrain

__all__ = [
    "pd_torque", "Rollout", "TrackingEnv", "fixture_policy", "passive_policy",
    "FallRecoveryConfig", "detect_fall", "early_termination", "recover",
    "HumanoidModel", "smpl_humanoid", "build_observation", "observation_layout",
    "sample_height_map", "FixtureDiscriminator", "RewardConfig", "amp_reward",
    "discriminator_loss", "energy_penalty", "imitation_reward", "total_reward",
    "Integrator", "step", "FLAT", "Box", "Terrain",
]
