"""Training loop and forecasting on top of the diffusion primitives."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .config import RunConfig
from .data import MAX_RATE, NowcastSample, denormalize, normalize
from .diffusion import DiffusionSchedule, build_schedule, sample, training_loss
from .model import NowcastDiffusion, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)


def build_model(cfg: RunConfig) -> NowcastDiffusion:
    torch.manual_seed(cfg.seed)
    return NowcastDiffusion(cfg.resolution, cfg.denoiser_config(), cfg.tau_config())


def schedule_for(cfg: RunConfig) -> DiffusionSchedule:
    return build_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end, cfg.sigma_mode)


def stack_samples(samples: list[NowcastSample], mode: str = "linear") -> tuple[torch.Tensor, torch.Tensor]:
    """Samples -> (inputs, targets) tensors in model space, each (B, 4, H, W)."""
    inputs = np.stack([normalize(s.inputs, mode) for s in samples])
    targets = np.stack([normalize(s.targets, mode) for s in samples])
    return torch.from_numpy(inputs).float(), torch.from_numpy(targets).float()


class Trainer:
    """Adam on the noise-prediction loss with periodic checkpoints and a CSV loss log.

    The data and noise generators are saved in the checkpoint, so a resumed
    run draws the same batches it would have drawn uninterrupted.
    """

    def __init__(self, cfg: RunConfig, model: NowcastDiffusion | None = None):
        self.cfg = cfg
        self.model = model if model is not None else build_model(cfg)
        self.sched = schedule_for(cfg)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=cfg.lr)
        self.generator = torch.Generator().manual_seed(cfg.seed)
        self.step = 0

    @classmethod
    def resume(cls, cfg: RunConfig, checkpoint) -> "Trainer":
        model, state = load_checkpoint(checkpoint)
        trainer = cls(cfg, model)
        if state.get("optimizer") is not None:
            trainer.optimizer.load_state_dict(state["optimizer"])
        gen_state = state.get("extra", {}).get("generator")
        if gen_state is not None:
            trainer.generator.set_state(gen_state)
        trainer.step = int(state["step"])
        return trainer

    def save(self, path) -> None:
        save_checkpoint(
            path,
            self.model,
            step=self.step,
            optimizer=self.optimizer,
            extra={"generator": self.generator.get_state(), "config": self.cfg.dumps()},
        )

    def train_step(self, inputs: torch.Tensor, targets: torch.Tensor) -> float:
        self.model.train()
        idx = torch.randint(0, inputs.shape[0], (self.cfg.batch_size,), generator=self.generator)
        loss = training_loss(self.model, targets[idx], inputs[idx], self.sched, self.generator)
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        self.step += 1
        return loss.item()

    def fit(
        self,
        inputs: torch.Tensor,
        targets: torch.Tensor,
        steps: int,
        out_dir=None,
        on_step: Callable[[int, float], None] | None = None,
    ) -> list[float]:
        """Run ``steps`` more optimizer steps; returns their losses."""
        losses = []
        log_file = None
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            log_path = out_dir / "loss.csv"
            fresh = self.step == 0 or not log_path.exists()
            log_file = open(log_path, "w" if fresh else "a")
            if fresh:
                log_file.write("step,loss\n")
        try:
            for _ in range(steps):
                loss = self.train_step(inputs, targets)
                losses.append(loss)
                if log_file is not None:
                    log_file.write(f"{self.step},{loss:.6f}\n")
                if on_step is not None:
                    on_step(self.step, loss)
                if out_dir is not None and self.step % self.cfg.checkpoint_every == 0:
                    log_file.flush()
                    self.save(out_dir / "checkpoint.pt")
            if out_dir is not None:
                self.save(out_dir / "checkpoint.pt")
        finally:
            if log_file is not None:
                log_file.close()
        return losses


def forecast(
    model: NowcastDiffusion,
    past_rates: np.ndarray,
    sched: DiffusionSchedule,
    seed: int = 0,
    mode: str = "linear",
) -> np.ndarray:
    """Past frames (B, 4, H, W) or (4, H, W) in mm/h -> generated future frames in mm/h."""
    single = past_rates.ndim == 3
    past = np.asarray(past_rates)[None] if single else np.asarray(past_rates)
    dtype = next(model.parameters()).dtype
    cond = torch.from_numpy(normalize(past, mode)).to(dtype)
    model.eval()
    generator = torch.Generator().manual_seed(seed)
    # rates are bounded, so keep the implied clean frame inside [0, MAX_RATE]
    bounds = tuple(float(v) for v in normalize(np.array([0.0, MAX_RATE]), mode))
    out = sample(model, cond, sched, tuple(cond.shape), generator=generator, dtype=dtype, clip=bounds)
    rates = denormalize(out.double().numpy(), mode).astype(np.float32)
    return rates[0] if single else rates
