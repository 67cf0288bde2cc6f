"""Gaussian diffusion: noise schedule, forward corruption, loss and sampler.

Steps are 1-based at every public entry point: ``t`` ranges over ``1..T``.
Schedule tensors are stored 0-based, so step ``t`` lives at index ``t - 1``.

    x_t     = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps
    x_{t-1} = (x_t - (1 - a_t) / sqrt(1 - abar_t) eps_hat) / sqrt(a_t) + sigma_t z
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch

from .errors import ConfigError, ContractError

# eps_theta(x_t, t, condition) with t a LongTensor of shape (B,)
Denoiser = Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]

SIGMA_MODES = ("beta", "posterior")


@dataclass(frozen=True)
class DiffusionSchedule:
    betas: torch.Tensor
    alphas: torch.Tensor
    alpha_bars: torch.Tensor
    sigmas: torch.Tensor

    @property
    def T(self) -> int:
        return int(self.betas.shape[0])

    def index(self, t):
        """Map 1-based step(s) to 0-based schedule indices, checking range."""
        t = torch.as_tensor(t, dtype=torch.long)
        if t.numel() and (int(t.min()) < 1 or int(t.max()) > self.T):
            raise ContractError(f"step outside [1, {self.T}]: {t.tolist()}")
        return t - 1

    def alpha_bar(self, t) -> torch.Tensor:
        return self.alpha_bars[self.index(t)]


def build_schedule(
    T: int = 1000,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
    sigma_mode: str = "beta",
) -> DiffusionSchedule:
    """Linear beta schedule over ``T`` steps, kept in float64."""
    if int(T) != T or T < 1:
        raise ConfigError(f"T must be a positive integer, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    if sigma_mode not in SIGMA_MODES:
        raise ConfigError(f"sigma_mode must be one of {SIGMA_MODES}, got {sigma_mode!r}")

    betas = torch.linspace(beta_start, beta_end, int(T), dtype=torch.float64)
    alphas = 1.0 - betas
    alpha_bars = torch.cumprod(alphas, dim=0)
    if sigma_mode == "beta":
        sigmas = betas.sqrt()
    else:
        prev = torch.cat([alpha_bars.new_ones(1), alpha_bars[:-1]])
        sigmas = (betas * (1.0 - prev) / (1.0 - alpha_bars)).sqrt()
    return DiffusionSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars, sigmas=sigmas)


def _per_sample(coef: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    # scalar -> broadcast as is; (B,) -> (B, 1, 1, ...)
    coef = coef.to(like.dtype)
    if coef.ndim == 0:
        return coef
    return coef.reshape(-1, *([1] * (like.ndim - 1)))


def q_sample(x0: torch.Tensor, t, eps: torch.Tensor, sched: DiffusionSchedule) -> torch.Tensor:
    """Corrupt ``x0`` to step ``t`` with the given noise.

    ``t`` is an int or a (B,) tensor of per-sample steps.
    """
    if x0.shape != eps.shape:
        raise ContractError(f"x0 {tuple(x0.shape)} and eps {tuple(eps.shape)} differ")
    abar = _per_sample(sched.alpha_bar(t), x0)
    return abar.sqrt() * x0 + (1.0 - abar).sqrt() * eps


def training_loss(
    denoiser: Denoiser,
    x0: torch.Tensor,
    condition: torch.Tensor,
    sched: DiffusionSchedule,
    generator: torch.Generator | None = None,
    t: torch.Tensor | None = None,
    eps: torch.Tensor | None = None,
) -> torch.Tensor:
    """Noise-prediction MSE for one batch.

    ``t`` and ``eps`` are drawn from ``generator`` unless supplied.
    """
    if x0.shape[0] == 0:
        raise ContractError("empty batch")
    b = x0.shape[0]
    if t is None:
        t = torch.randint(1, sched.T + 1, (b,), generator=generator)
    if eps is None:
        eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    x_t = q_sample(x0, t, eps, sched)
    eps_hat = denoiser(x_t, t, condition)
    return ((eps - eps_hat) ** 2).mean()


def ddpm_step(
    x_t: torch.Tensor,
    t: int,
    eps_hat: torch.Tensor,
    z: torch.Tensor | None,
    sched: DiffusionSchedule,
    clip: tuple[float, float] | None = None,
) -> torch.Tensor:
    """One ancestral step from ``t`` to ``t - 1``. ``z`` must be zero (or None) at t=1.

    With ``clip=(lo, hi)`` the implied x0 = (x_t - sqrt(1 - abar) eps_hat) / sqrt(abar)
    is clamped to the data range and the step uses the posterior mean
    q(x_{t-1} | x_t, x0). Unclamped, that mean equals the eps form exactly.
    """
    i = int(sched.index(t))
    if t == 1 and z is not None and bool((z != 0).any()):
        raise ContractError("z must be zero at the final step t=1")
    alpha = sched.alphas[i].item()
    abar = sched.alpha_bars[i].item()
    if clip is None:
        mean = (x_t - (1.0 - alpha) / (1.0 - abar) ** 0.5 * eps_hat) / alpha**0.5
    else:
        abar_prev = sched.alpha_bars[i - 1].item() if i > 0 else 1.0
        beta = sched.betas[i].item()
        x0 = ((x_t - (1.0 - abar) ** 0.5 * eps_hat) / abar**0.5).clamp(*clip)
        mean = (abar_prev**0.5 * beta * x0 + alpha**0.5 * (1.0 - abar_prev) * x_t) / (1.0 - abar)
    if z is None:
        return mean
    return mean + sched.sigmas[i].item() * z


@torch.no_grad()
def sample(
    denoiser: Denoiser,
    condition: torch.Tensor,
    sched: DiffusionSchedule,
    shape: tuple[int, ...],
    generator: torch.Generator | None = None,
    dtype: torch.dtype = torch.float32,
    clip: tuple[float, float] | None = None,
) -> torch.Tensor:
    """Ancestral sampling from pure noise; calls ``denoiser`` exactly ``T`` times.

    ``clip`` bounds the implied x0 at every step (see ``ddpm_step``).
    """
    x = torch.randn(shape, generator=generator, dtype=dtype)
    b = shape[0]
    for t in range(sched.T, 0, -1):
        steps = torch.full((b,), t, dtype=torch.long)
        eps_hat = denoiser(x, steps, condition)
        z = torch.randn(shape, generator=generator, dtype=dtype) if t > 1 else None
        x = ddpm_step(x, t, eps_hat, z, sched, clip)
    return x
