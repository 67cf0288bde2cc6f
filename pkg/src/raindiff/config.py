"""Run configuration: dataclass defaults < ``key = value`` file < command line."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .condition import TAUConfig
from .denoiser import DenoiserConfig
from .errors import ConfigError

_SECTION = "run"


@dataclass
class RunConfig:
    # defaults follow the full-scale setup; configs/toy.cfg scales them down
    resolution: int = 256
    diffusion_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    sigma_mode: str = "beta"
    levels: int = 5
    base_channels: int = 32
    channel_mults: tuple[int, ...] = (1, 2, 4, 8, 8)
    attention_levels: tuple[int, ...] | None = None
    embed_dim: int = 64
    tau_attention: bool = True
    attention_threshold: int = 32
    tau_depth: int | None = None
    lr: float = 1e-5
    batch_size: int = 32
    steps: int = 33_000_000
    checkpoint_every: int = 1000
    seed: int = 0
    norm_mode: str = "linear"
    window_stride: int = 1
    synth_count: int = 8
    synth_frames: int = 24
    fss_n: int = 9
    fss_band: str = ">2"
    hss_mode: str = "standard"
    weight_mode: str = "max24"

    def __post_init__(self):
        if self.resolution % 16:
            raise ConfigError(f"resolution must be divisible by 16, got {self.resolution}")
        if self.resolution % (2 ** (self.levels - 1)):
            raise ConfigError(
                f"resolution {self.resolution} not divisible by 2^{self.levels - 1}"
            )
        if self.fss_n < 1 or self.fss_n % 2 == 0:
            raise ConfigError(f"fss_n must be a positive odd integer, got {self.fss_n}")
        if self.hss_mode not in ("standard", "paper"):
            raise ConfigError(f"hss_mode must be 'standard' or 'paper', got {self.hss_mode!r}")
        if self.weight_mode not in ("max24", "min24"):
            raise ConfigError(f"weight_mode must be 'max24' or 'min24', got {self.weight_mode!r}")
        for name in ("steps", "batch_size", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        # let the component configs validate their own fields
        self.denoiser_config()

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(
            levels=self.levels,
            base_channels=self.base_channels,
            channel_mults=self.channel_mults,
            attention_levels=self.attention_levels,
            embed_dim=self.embed_dim,
        )

    def tau_config(self) -> TAUConfig:
        return TAUConfig(
            attention=self.tau_attention,
            attention_size_threshold=self.attention_threshold,
            depth=self.tau_depth,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


_TYPES = {
    "int": int,
    "float": float,
    "str": str,
    "bool": bool,
}


def _parse(name: str, annotation: str, raw: str) -> Any:
    raw = raw.strip()
    optional = "None" in annotation
    if optional and raw.lower() in ("none", ""):
        return None
    if annotation.startswith("tuple"):
        try:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"{name}: expected comma-separated integers, got {raw!r}") from None
    base = annotation.split("|")[0].strip()
    if base == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if base == "int":
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        return _TYPES[base](raw)
    except (KeyError, ValueError):
        raise ConfigError(f"{name}: cannot parse {raw!r} as {base}") from None


def parse_overrides(pairs: dict[str, str]) -> dict[str, Any]:
    known = {f.name: f for f in fields(RunConfig)}
    out = {}
    for key, raw in pairs.items():
        key = key.strip().replace("-", "_")
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _parse(key, str(known[key].type), raw)
    return out


def read_config_file(path) -> dict[str, Any]:
    return read_config_text(Path(path).read_text(), str(path))


def read_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    # the files carry no section headers; give configparser an implicit one
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",),
        interpolation=None,
    )
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return parse_overrides(dict(parser[_SECTION]))


def load_config(
    path=None, overrides: dict[str, Any] | None = None, base: dict[str, Any] | None = None
) -> RunConfig:
    values: dict[str, Any] = dict(base or {})
    if path is not None:
        values.update(read_config_file(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**values)
