"""Generator losses for the GAN nowcasting baselines.

Discriminators are not modelled here: callers pass in the spatial (``D``) and
temporal (``T``) discriminator scores. Everything is plain torch so the losses
stay differentiable with respect to the generator output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch
import torch.nn.functional as F

from .errors import ConfigError, ContractError

WEIGHT_MODES = ("max24", "min24")
WEIGHT_KNEE = 24.0


@dataclass
class GanLossInputs:
    d_scores: torch.Tensor  # (B,) spatial discriminator on generated sequences
    t_scores: torch.Tensor  # (B,) temporal discriminator on (context, generated)
    gen_mean: torch.Tensor  # (N, H, W) or (B, N, H, W): E_Z[G(Z; X_1:M)]
    target: torch.Tensor  # same shape as gen_mean: X_{M+1:M+N}
    lam: float = 0.0

    def __post_init__(self):
        self.d_scores = torch.as_tensor(self.d_scores, dtype=torch.float64)
        self.t_scores = torch.as_tensor(self.t_scores, dtype=torch.float64)
        self.gen_mean = torch.as_tensor(self.gen_mean)
        self.target = torch.as_tensor(self.target)
        if self.gen_mean.shape != self.target.shape:
            raise ContractError(
                f"gen_mean {tuple(self.gen_mean.shape)} vs target {tuple(self.target.shape)}"
            )
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")


def weight_fn(i, mode: str = "max24") -> torch.Tensor:
    """Per-cell weight of the rain rate ``i`` (mm/h).

    ``max24`` is W(i) = max(i, 24) as printed for the baselines; ``min24`` caps
    the weight at 24 instead, which is how heavy-rain weighting is usually
    bounded.
    """
    if not torch.is_tensor(i):
        i = torch.as_tensor(i, dtype=torch.float64)
    if mode == "max24":
        return torch.clamp(i, min=WEIGHT_KNEE)
    if mode == "min24":
        return torch.clamp(i, max=WEIGHT_KNEE)
    raise ConfigError(f"weight mode must be one of {WEIGHT_MODES}, got {mode!r}")


def weighted_regularizer(gen_mean, target, mode: str = "max24") -> torch.Tensor:
    """(1/HWN) * sum |(gen_mean - target) * W(target)|, averaged over any batch axis."""
    gen_mean = torch.as_tensor(gen_mean)
    target = torch.as_tensor(target)
    if gen_mean.shape != target.shape:
        raise ContractError(f"gen_mean {tuple(gen_mean.shape)} vs target {tuple(target.shape)}")
    return ((gen_mean - target) * weight_fn(target, mode)).abs().mean()


def expected_generation(generate: Callable[[], torch.Tensor], draws: int = 1) -> torch.Tensor:
    """Monte Carlo estimate of E_Z[G(Z; context)] from ``draws`` calls."""
    if draws < 1:
        raise ConfigError(f"draws must be >= 1, got {draws}")
    return torch.stack([generate() for _ in range(draws)]).mean(dim=0)


def hinge_generator_loss(inp: GanLossInputs, mode: str = "max24") -> torch.Tensor:
    adv = (F.relu(1.0 - inp.d_scores) + F.relu(1.0 - inp.t_scores)).mean()
    if inp.lam == 0:
        return adv
    return adv + inp.lam * weighted_regularizer(inp.gen_mean, inp.target, mode)


def nonhinge_generator_loss(inp: GanLossInputs, mode: str = "max24") -> torch.Tensor:
    """E[D + T] - lambda * L_R, with the sign convention kept exactly as printed.

    Note that this quantity grows with the discriminator scores; callers that
    minimise it should negate the adversarial part themselves.
    """
    adv = inp.d_scores.mean() + inp.t_scores.mean()
    if inp.lam == 0:
        return adv
    return adv - inp.lam * weighted_regularizer(inp.gen_mean, inp.target, mode)
