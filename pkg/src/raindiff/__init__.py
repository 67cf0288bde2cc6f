"""Conditional diffusion nowcasting of radar rainfall."""

from .condition import ConditionEncoder, TAUConfig, TripletAttention, z_pool
from .config import RunConfig, load_config
from .data import (
    FrameSequence,
    NowcastSample,
    denormalize,
    load_nrf,
    make_windows,
    normalize,
    save_nrf,
    synth_advection,
)
from .denoiser import DenoiserConfig, UNetDenoiser, sinusoidal_embedding
from .diffusion import DiffusionSchedule, build_schedule, ddpm_step, q_sample, sample, training_loss
from .errors import ConfigError, ContractError
from .metrics import SkillReport, csi, evaluate_report, fss, hss, mse_metric
from .model import NowcastDiffusion, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
