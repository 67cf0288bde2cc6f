"""Noise-prediction UNet with additive condition fusion at every encoder level."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, ContractError


@dataclass
class DenoiserConfig:
    levels: int = 5
    base_channels: int = 32
    channel_mults: tuple[int, ...] = (1, 2, 4, 8, 8)
    # 1-based levels; None means the two lowest-resolution levels
    attention_levels: tuple[int, ...] | None = None
    input_channels: int = 4
    embed_dim: int = 64
    fusion: bool = True
    zero_init: bool = False

    def __post_init__(self):
        self.channel_mults = tuple(self.channel_mults)
        if self.levels < 2:
            raise ConfigError(f"levels must be >= 2, got {self.levels}")
        if len(self.channel_mults) < self.levels:
            raise ConfigError(
                f"need {self.levels} channel multipliers, got {self.channel_mults}"
            )
        self.channel_mults = self.channel_mults[: self.levels]
        if self.attention_levels is None:
            self.attention_levels = tuple(range(max(1, self.levels - 1), self.levels + 1))
        self.attention_levels = tuple(sorted(set(self.attention_levels)))
        if any(k < 1 or k > self.levels for k in self.attention_levels):
            raise ConfigError(
                f"attention levels {self.attention_levels} outside 1..{self.levels}"
            )
        if self.embed_dim % 2:
            raise ConfigError(f"embed_dim must be even, got {self.embed_dim}")

    @property
    def channels(self) -> list[int]:
        return [self.base_channels * m for m in self.channel_mults]

    def check_resolution(self, size: int) -> None:
        if size % (2 ** (self.levels - 1)):
            raise ConfigError(
                f"resolution {size} not divisible by 2^{self.levels - 1}"
            )


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Fixed sin/cos table for integer steps ``t`` -> (B, dim); sines first."""
    if dim % 2:
        raise ConfigError(f"embedding dim must be even, got {dim}")
    t = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class TimeEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        if dim % 2:
            raise ConfigError(f"embed_dim must be even, got {dim}")
        self.dim = dim
        self.mlp = nn.Sequential(nn.Linear(dim, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        base = sinusoidal_embedding(t, self.dim).to(self.mlp[0].weight.dtype)
        return self.mlp(base)


def _groups(channels: int) -> int:
    for g in (8, 4, 2):
        if channels % g == 0:
            return g
    return 1


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, embed_dim: int, zero_init: bool = False):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(in_ch), in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.temb = nn.Linear(embed_dim, out_ch)
        self.norm2 = nn.GroupNorm(_groups(out_ch), out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.shortcut = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()
        if zero_init:
            nn.init.zeros_(self.conv2.weight)
            nn.init.zeros_(self.conv2.bias)

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.temb(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.shortcut(x)


class SelfAttention(nn.Module):
    """Single-head dot-product attention over flattened spatial positions."""

    def __init__(self, channels: int):
        super().__init__()
        self.norm = nn.GroupNorm(_groups(channels), channels)
        self.q = nn.Conv2d(channels, channels, 1)
        self.k = nn.Conv2d(channels, channels, 1)
        self.v = nn.Conv2d(channels, channels, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def weights(self, x: torch.Tensor) -> torch.Tensor:
        """Attention matrix (B, HW, HW); rows are queries."""
        h = self.norm(x)
        q = self.q(h).flatten(2)
        k = self.k(h).flatten(2)
        scores = torch.einsum("bci,bcj->bij", q, k) / math.sqrt(x.shape[1])
        return scores.softmax(dim=-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, hh, ww = x.shape
        attn = self.weights(x)
        v = self.v(self.norm(x)).flatten(2)
        out = torch.einsum("bij,bcj->bci", attn, v).reshape(b, c, hh, ww)
        return x + self.proj(out)


class UNetDenoiser(nn.Module):
    """eps_theta(x_t, t, cond) with ``cond`` a list of per-level feature maps.

    Level k runs at H / 2^(k-1). Each encoder level's output has the matching
    condition map added; the sum feeds both the next level and the skip.
    """

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        ch = cfg.channels
        self.time = TimeEmbedding(cfg.embed_dim)
        self.stem = nn.Conv2d(cfg.input_channels, ch[0], 3, padding=1)

        self.down = nn.ModuleList()
        self.down_attn = nn.ModuleList()
        prev = ch[0]
        for k in range(cfg.levels):
            self.down.append(ResidualBlock(prev, ch[k], cfg.embed_dim, cfg.zero_init))
            self.down_attn.append(self._attn(k, ch[k]))
            prev = ch[k]

        self.mid = ResidualBlock(ch[-1], ch[-1], cfg.embed_dim, cfg.zero_init)

        self.up = nn.ModuleList()
        self.up_attn = nn.ModuleList()
        self.upsample = nn.ModuleList()
        for k in reversed(range(cfg.levels)):
            self.up.append(ResidualBlock(prev + ch[k], ch[k], cfg.embed_dim, cfg.zero_init))
            self.up_attn.append(self._attn(k, ch[k]))
            self.upsample.append(
                nn.Conv2d(ch[k], ch[k], 3, padding=1) if k > 0 else nn.Identity()
            )
            prev = ch[k]

        self.out_norm = nn.GroupNorm(_groups(ch[0]), ch[0])
        self.out = nn.Conv2d(ch[0], cfg.input_channels, 3, padding=1)

    def _attn(self, k: int, channels: int) -> nn.Module:
        return SelfAttention(channels) if (k + 1) in self.cfg.attention_levels else nn.Identity()

    def check_condition(self, x_t: torch.Tensor, cond) -> None:
        if cond is None:
            return
        if len(cond) != self.cfg.levels:
            raise ContractError(f"expected {self.cfg.levels} condition maps, got {len(cond)}")
        h, w = x_t.shape[-2:]
        for k, (c, ch) in enumerate(zip(cond, self.cfg.channels)):
            want = (ch, h >> k, w >> k)
            if tuple(c.shape[-3:]) != want:
                raise ContractError(
                    f"condition level {k + 1} has shape {tuple(c.shape[-3:])}, expected {want}"
                )

    def forward(self, x_t: torch.Tensor, t: torch.Tensor, cond=None) -> torch.Tensor:
        h, w = x_t.shape[-2:]
        div = 2 ** (self.cfg.levels - 1)
        if h % div or w % div:
            raise ContractError(f"input {h}x{w} not divisible by {div}")
        self.check_condition(x_t, cond)
        t = torch.as_tensor(t).reshape(-1)
        if t.numel() == 1 and x_t.shape[0] > 1:
            t = t.expand(x_t.shape[0])
        temb = self.time(t)

        x = self.stem(x_t)
        skips = []
        for k, (block, attn) in enumerate(zip(self.down, self.down_attn)):
            if k > 0:
                x = F.avg_pool2d(x, 2)
            x = attn(block(x, temb))
            if self.cfg.fusion and cond is not None:
                x = x + cond[k]
            skips.append(x)

        x = self.mid(x, temb)
        for block, attn, up in zip(self.up, self.up_attn, self.upsample):
            x = attn(block(torch.cat([x, skips.pop()], dim=1), temb))
            if not isinstance(up, nn.Identity):
                x = up(F.interpolate(x, scale_factor=2, mode="nearest"))
        return self.out(F.silu(self.out_norm(x)))
