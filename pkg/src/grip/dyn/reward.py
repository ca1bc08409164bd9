"""Reward terms, discriminator loss and a fixed-parameter fixture discriminator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..rotmath import geodesic_angle


@dataclass(frozen=True)
class RewardConfig:
    w_amp: float = 0.5
    w_imit: float = 0.5
    w_p: float = 0.5
    w_theta: float = 0.3
    w_v: float = 0.1
    w_omega: float = 0.1
    k_p: float = 100.0
    k_theta: float = 100.0
    k_v: float = 10.0
    k_omega: float = 0.1
    alpha: float = 0.0005
    lambda_gp: float = 5.0
    window: int = 10
    gamma: float = 0.99
    skip_frames: int = 3

    def __post_init__(self):
        for name in ("w_amp", "w_imit", "w_p", "w_theta", "w_v", "w_omega", "k_p", "k_theta",
                     "k_v", "k_omega", "alpha", "lambda_gp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.window < 1:
            raise ValueError("window must be at least one frame")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")


@dataclass(frozen=True)
class RewardTerms:
    r_amp: float
    r_imit: float
    r_energy: float
    total: float


def amp_reward(logit):
    """-log(1 - sigmoid(logit)), written as softplus(logit)."""
    return np.logaddexp(0.0, logit)


def imitation_reward(ref, sim, cfg=RewardConfig()):
    dp = np.linalg.norm(ref.joint_pos - sim.joint_pos)
    dth = np.linalg.norm(geodesic_angle(ref.joint_rot, sim.joint_rot))
    dv = np.linalg.norm(ref.joint_linvel - sim.joint_linvel)
    dw = np.linalg.norm(ref.joint_angvel - sim.joint_angvel)
    return (cfg.w_p * np.exp(-cfg.k_p * dp) + cfg.w_theta * np.exp(-cfg.k_theta * dth)
            + cfg.w_v * np.exp(-cfg.k_v * dv) + cfg.w_omega * np.exp(-cfg.k_omega * dw))


def energy_penalty(torques, angvel, cfg=RewardConfig(), frame_index=0):
    """Negative scaled mechanical power; zero over the first frames of a sequence."""
    if frame_index < cfg.skip_frames:
        return 0.0
    power = np.sum(np.abs(np.asarray(torques, dtype=np.float64) * np.asarray(angvel, dtype=np.float64)))
    return -cfg.alpha * power


def total_reward(r_amp, r_imit, r_energy, cfg=RewardConfig()):
    total = cfg.w_amp * r_amp + cfg.w_imit * r_imit + r_energy
    return RewardTerms(float(r_amp), float(r_imit), float(r_energy), float(total))


def discriminator_loss(real_logits, fake_logits, grad_sq_norms_real, cfg=RewardConfig()):
    """Minimised discriminator objective with a gradient penalty on real samples.

    -[mean log(1 - sigmoid(fake)) + mean log sigmoid(real)] + lambda_gp * mean grad^2
    """
    real = np.atleast_1d(np.asarray(real_logits, dtype=np.float64))
    fake = np.atleast_1d(np.asarray(fake_logits, dtype=np.float64))
    gp = np.atleast_1d(np.asarray(grad_sq_norms_real, dtype=np.float64))
    if real.size == 0 or fake.size == 0:
        raise ValueError("logit batches must be non-empty")
    return (np.mean(np.logaddexp(0.0, fake)) + np.mean(np.logaddexp(0.0, -real))
            + cfg.lambda_gp * (np.mean(gp) if gp.size else 0.0))


def discriminator_loss_torch(real_logits, fake_logits, grad_sq_norms_real, lambda_gp):
    f = nn.functional.softplus
    return f(fake_logits).mean() + f(-real_logits).mean() + lambda_gp * grad_sq_norms_real.mean()


# ----------------------------------------------------------- fixture model --
SELF_FEATURES = 24 * 15
ROOT_HEIGHT_INDEX = 2  # z of the root row in the self block


class FixtureDiscriminator(nn.Module):
    """Seeded stand-in for a trained motion discriminator.

    Input is a window of self-observation frames, shape (..., W, 360). The
    logit is a small tanh network plus a designed pathway that rewards an
    upright root height, so a fallen humanoid scores low.
    """

    def __init__(self, window=10, hidden=16, seed=0, height_gain=8.0, height_ref=0.5):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.window = window
        self.height_gain = height_gain
        self.height_ref = height_ref
        self.l1 = nn.Linear(window * SELF_FEATURES, hidden).double()
        self.l2 = nn.Linear(hidden, 1).double()
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(0.05 * torch.randn(p.shape, generator=gen, dtype=torch.float64))

    def forward(self, x):
        if x.shape[-2:] != (self.window, SELF_FEATURES):
            raise ValueError(f"expected (..., {self.window}, {SELF_FEATURES}) input")
        z = x[..., ROOT_HEIGHT_INDEX].mean(-1)
        mlp = self.l2(torch.tanh(self.l1(x.flatten(-2)))).squeeze(-1)
        return self.height_gain * (z - self.height_ref) + 0.1 * mlp

    def logit(self, window_obs):
        with torch.no_grad():
            return self(torch.as_tensor(np.asarray(window_obs, dtype=np.float64))).numpy()

    def prob(self, window_obs):
        return 1.0 / (1.0 + np.exp(-self.logit(window_obs)))

    def grad_sq_norms(self, window_obs):
        """Squared input-gradient norms per sample, the gradient-penalty operand."""
        x = torch.as_tensor(np.asarray(window_obs, dtype=np.float64)).clone().requires_grad_(True)
        out = self(x)
        (g,) = torch.autograd.grad(out.sum(), x)
        return g.reshape(g.shape[0], -1).pow(2).sum(-1).detach().numpy()
