"""Condition encoder: stacked TAU blocks (nested UNets with triplet attention).

Block k sees the past frames downsampled k-1 times and emits the condition map
that gets added to denoiser level k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, ContractError


def z_pool(x: torch.Tensor) -> torch.Tensor:
    """(B, C, H, W) -> (B, 2, H, W): channel max then channel mean."""
    return torch.cat([x.amax(dim=1, keepdim=True), x.mean(dim=1, keepdim=True)], dim=1)


class AttentionGate(nn.Module):
    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2, bias=False)
        self.bn = nn.BatchNorm2d(1)

    def gate(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.bn(self.conv(z_pool(x))))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.gate(x)


class TripletAttention(nn.Module):
    """Mean of three gated views: (C,H) rotation, (W,C) rotation and the plain (H,W) map."""

    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.cw = AttentionGate(kernel_size)
        self.hc = AttentionGate(kernel_size)
        self.hw = AttentionGate(kernel_size)

    def branches(self, x: torch.Tensor) -> list[torch.Tensor]:
        # H takes the channel role: gate over the (C, W) plane
        b1 = self.cw(x.permute(0, 2, 1, 3)).permute(0, 2, 1, 3)
        # W takes the channel role: gate over the (H, C) plane
        b2 = self.hc(x.permute(0, 3, 2, 1)).permute(0, 3, 2, 1)
        b3 = self.hw(x)
        return [b1, b2, b3]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b1, b2, b3 = self.branches(x)
        return (b1 + b2 + b3) / 3.0


@dataclass
class TAUConfig:
    attention: bool = True
    attention_size_threshold: int = 32
    # None: min(4, log2(input size) - 1) per block
    depth: int | None = None
    mid_ratio: float = 0.5

    def depth_for(self, size: int) -> int:
        if self.depth is not None:
            return self.depth
        return max(1, min(4, int(math.log2(size)) - 1))


class TAUUnit(nn.Module):
    """[triplet attention] -> conv -> BN -> ReLU. Attention runs only on small maps."""

    def __init__(self, in_ch: int, out_ch: int, cfg: TAUConfig, dilation: int = 1):
        super().__init__()
        self.cfg = cfg
        self.attn = TripletAttention() if cfg.attention else None
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=dilation, dilation=dilation, bias=False)
        self.bn = nn.BatchNorm2d(out_ch)

    def attention_active(self, h: int, w: int) -> bool:
        thr = self.cfg.attention_size_threshold
        return self.attn is not None and h <= thr and w <= thr

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.attention_active(*x.shape[-2:]):
            x = self.attn(x)
        return F.relu(self.bn(self.conv(x)))


class TAUBlock(nn.Module):
    """RSU-style nested UNet with ``depth`` internal resolution stages.

    Encoder stage s (1-based) runs at size/2^(s-1); a dilated unit sits at the
    bottom; decoder units fuse the upsampled path with same-stage features; the
    block input projection is added back at the end.
    """

    def __init__(self, in_ch: int, mid_ch: int, out_ch: int, depth: int, cfg: TAUConfig):
        super().__init__()
        if depth < 1:
            raise ConfigError(f"TAU depth must be >= 1, got {depth}")
        self.depth = depth
        self.cfg = cfg
        self.inp = TAUUnit(in_ch, out_ch, cfg)
        self.enc = nn.ModuleList(
            [TAUUnit(out_ch if s == 0 else mid_ch, mid_ch, cfg) for s in range(depth)]
        )
        self.bottom = TAUUnit(mid_ch, mid_ch, cfg, dilation=2)
        self.dec = nn.ModuleList(
            [TAUUnit(2 * mid_ch, out_ch if s == 0 else mid_ch, cfg) for s in range(depth)]
        )

    def stage_sizes(self, h: int, w: int) -> list[tuple[int, int]]:
        return [(h >> s, w >> s) for s in range(self.depth)]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        need = 2 ** (self.depth - 1)
        if h < need or w < need or h % need or w % need:
            raise ConfigError(f"input {h}x{w} too small or indivisible for TAU depth {self.depth}")
        res = self.inp(x)
        feats = []
        y = res
        for s, unit in enumerate(self.enc):
            if s > 0:
                y = F.avg_pool2d(y, 2)
            y = unit(y)
            feats.append(y)
        y = self.bottom(y)
        for s in reversed(range(self.depth)):
            y = self.dec[s](torch.cat([y, feats[s]], dim=1))
            if s > 0:
                y = F.interpolate(y, size=feats[s - 1].shape[-2:], mode="nearest")
        return y + res


class ConditionEncoder(nn.Module):
    """Past frames (B, 4, H, W) -> list of ``len(channels)`` maps at halving sizes."""

    def __init__(
        self,
        channels: list[int],
        resolution: int,
        in_channels: int = 4,
        cfg: TAUConfig | None = None,
    ):
        super().__init__()
        self.cfg = cfg or TAUConfig()
        self.channels = list(channels)
        self.resolution = resolution
        n = len(self.channels)
        if resolution % (2 ** (n - 1)):
            raise ConfigError(f"resolution {resolution} not divisible by 2^{n - 1}")
        self.blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        prev = in_channels
        for k, ch in enumerate(self.channels):
            size = resolution >> k
            depth = self.cfg.depth_for(size)
            if size < 2 ** (depth - 1):
                raise ConfigError(f"level {k + 1} map {size}px too small for depth {depth}")
            mid = max(1, int(ch * self.cfg.mid_ratio))
            self.blocks.append(TAUBlock(prev, mid, ch, depth, self.cfg))
            if k < n - 1:
                self.downs.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
            prev = ch

    def attention_map(self) -> list[list[bool]]:
        """Per block, whether each internal encoder stage runs attention."""
        out = []
        for k, block in enumerate(self.blocks):
            size = self.resolution >> k
            out.append(
                [block.enc[s].attention_active(hh, ww)
                 for s, (hh, ww) in enumerate(block.stage_sizes(size, size))]
            )
        return out

    def forward(self, frames: torch.Tensor) -> list[torch.Tensor]:
        h, w = frames.shape[-2:]
        div = 2 ** (len(self.channels) - 1)
        if h % div or w % div:
            raise ConfigError(f"frames {h}x{w} not divisible by {div}")
        if h != self.resolution or w != self.resolution:
            raise ContractError(f"frames {h}x{w} do not match encoder resolution {self.resolution}")
        maps = []
        x = frames
        for k, block in enumerate(self.blocks):
            x = block(x)
            maps.append(x)
            if k < len(self.downs):
                x = self.downs[k](x)
        return maps
