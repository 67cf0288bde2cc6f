"""Jointly trained condition encoder + denoiser, and checkpoint I/O."""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import torch
from torch import nn

from .condition import ConditionEncoder, TAUConfig
from .denoiser import DenoiserConfig, UNetDenoiser


class NowcastDiffusion(nn.Module):
    """eps_theta(x_t, t, past_frames): encodes the past frames, then denoises."""

    def __init__(self, resolution: int, denoiser: DenoiserConfig, tau: TAUConfig | None = None):
        super().__init__()
        denoiser.check_resolution(resolution)
        self.resolution = resolution
        self.denoiser_cfg = denoiser
        self.tau_cfg = tau or TAUConfig()
        self.encoder = ConditionEncoder(
            denoiser.channels, resolution, in_channels=denoiser.input_channels, cfg=self.tau_cfg
        )
        self.denoiser = UNetDenoiser(denoiser)

    def forward(self, x_t: torch.Tensor, t: torch.Tensor, frames: torch.Tensor) -> torch.Tensor:
        return self.denoiser(x_t, t, self.encoder(frames))

    def describe(self) -> dict:
        return {
            "resolution": self.resolution,
            "denoiser": asdict(self.denoiser_cfg),
            "tau": asdict(self.tau_cfg),
        }

    @classmethod
    def from_description(cls, desc: dict) -> "NowcastDiffusion":
        return cls(
            desc["resolution"],
            DenoiserConfig(**desc["denoiser"]),
            TAUConfig(**desc["tau"]),
        )


def save_checkpoint(path, model: NowcastDiffusion, step: int = 0, optimizer=None, extra=None) -> None:
    state = {
        "model": model.describe(),
        "state_dict": model.state_dict(),
        "step": step,
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "extra": extra or {},
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(state, tmp)
    tmp.replace(path)


def load_checkpoint(path) -> tuple[NowcastDiffusion, dict]:
    """Rebuild the model from a checkpoint; returns (model, raw state)."""
    state = torch.load(path, map_location="cpu", weights_only=False)
    model = NowcastDiffusion.from_description(state["model"])
    dtype = next(v.dtype for v in state["state_dict"].values() if v.is_floating_point())
    model.to(dtype)
    model.load_state_dict(state["state_dict"])
    return model, state
