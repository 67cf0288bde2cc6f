"""Rain-rate frame sequences: NRF storage, windowing, scaling and synthesis.

NRF layout (all little-endian)::

    b"NRF1" | u32 frames | u32 height | u32 width | f64 cadence_minutes
    | frames*height*width f32 values, frame-major then row-major (mm/h)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError

MAX_RATE = 128.0
INPUT_FRAMES = 4
TARGET_FRAMES = 4
NRF_MAGIC = b"NRF1"
_HEADER = struct.Struct("<4sIIId")


class NRFError(ContractError):
    """Malformed NRF file."""


class NRFMagicError(NRFError):
    pass


class NRFTruncatedError(NRFError):
    pass


class NRFRangeError(NRFError):
    pass


def _check_rates(frames: np.ndarray, exc=ContractError) -> None:
    if not np.all(np.isfinite(frames)):
        raise exc("rain rates must be finite")
    if frames.size and (frames.min() < 0 or frames.max() > MAX_RATE):
        raise exc(
            f"rain rates must lie in [0, {MAX_RATE}] mm/h, got [{frames.min()}, {frames.max()}]"
        )


@dataclass
class FrameSequence:
    frames: np.ndarray  # (T, H, W) float32, mm/h
    cadence_minutes: float = 5.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3:
            raise ContractError(f"frames must be (T, H, W), got shape {self.frames.shape}")
        _check_rates(self.frames)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.frames.shape


@dataclass
class NowcastSample:
    inputs: np.ndarray  # (4, H, W) mm/h
    targets: np.ndarray  # (4, H, W) mm/h


def encode_nrf(seq: FrameSequence) -> bytes:
    t, h, w = seq.frames.shape
    header = _HEADER.pack(NRF_MAGIC, t, h, w, float(seq.cadence_minutes))
    return header + seq.frames.astype("<f4", copy=False).tobytes(order="C")


def decode_nrf(data: bytes) -> FrameSequence:
    if len(data) < 4 or data[:4] != NRF_MAGIC:
        raise NRFMagicError(f"bad magic {data[:4]!r}, expected {NRF_MAGIC!r}")
    if len(data) < _HEADER.size:
        raise NRFTruncatedError(f"header needs {_HEADER.size} bytes, file has {len(data)}")
    _, t, h, w, cadence = _HEADER.unpack_from(data)
    need = _HEADER.size + 4 * t * h * w
    if len(data) < need:
        raise NRFTruncatedError(f"payload needs {need} bytes, file has {len(data)}")
    if len(data) > need:
        raise NRFError(f"{len(data) - need} trailing bytes after payload")
    frames = np.frombuffer(data, dtype="<f4", count=t * h * w, offset=_HEADER.size)
    frames = frames.reshape(t, h, w).astype(np.float32)
    _check_rates(frames, NRFRangeError)
    return FrameSequence(frames, cadence)


def save_nrf(seq: FrameSequence, path) -> None:
    Path(path).write_bytes(encode_nrf(seq))


def load_nrf(path) -> FrameSequence:
    return decode_nrf(Path(path).read_bytes())


def make_windows(seq: FrameSequence, stride: int = 1) -> list[NowcastSample]:
    """Sliding 8-frame windows split 4 inputs / 4 targets, starting at 0, s, 2s, ..."""
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    span = INPUT_FRAMES + TARGET_FRAMES
    return [
        NowcastSample(
            seq.frames[i : i + INPUT_FRAMES].copy(),
            seq.frames[i + INPUT_FRAMES : i + span].copy(),
        )
        for i in range(0, len(seq) - span + 1, stride)
    ]


def normalize(field, mode: str = "linear") -> np.ndarray:
    """mm/h in [0, 128] -> model space [-1, 1]."""
    field = np.asarray(field, dtype=np.float64)
    if not np.all(np.isfinite(field)) or (field.size and (field.min() < 0 or field.max() > MAX_RATE)):
        raise ContractError(f"normalize expects rates in [0, {MAX_RATE}]")
    if mode == "linear":
        return field / 64.0 - 1.0
    if mode == "log1p":
        return 2.0 * np.log1p(field) / np.log1p(MAX_RATE) - 1.0
    raise ConfigError(f"normalization mode must be 'linear' or 'log1p', got {mode!r}")


def denormalize(values, mode: str = "linear") -> np.ndarray:
    """Model space -> mm/h, clipped to [0, 128]."""
    values = np.asarray(values, dtype=np.float64)
    if mode == "linear":
        rates = (values + 1.0) * 64.0
    elif mode == "log1p":
        rates = np.expm1((values + 1.0) * np.log1p(MAX_RATE) / 2.0)
    else:
        raise ConfigError(f"normalization mode must be 'linear' or 'log1p', got {mode!r}")
    return np.clip(rates, 0.0, MAX_RATE)


@dataclass
class RainCell:
    y: float
    x: float
    sigma: float
    peak: float


def synth_advection(
    count: int,
    height: int,
    width: int,
    rng: np.random.Generator | int | None = None,
    velocity: tuple[float, float] | None = None,
    cells: list[RainCell] | None = None,
    diffusion: float = 0.05,
    cadence_minutes: float = 5.0,
) -> FrameSequence:
    """Gaussian rain cells carried by one constant velocity (dy, dx) px/frame.

    Each cell widens slowly (variance grows by ``2 * diffusion`` per frame) and
    keeps its peak rate. Unset velocity/cells are drawn from ``rng``.
    """
    if height < 16 or width < 16:
        raise ConfigError(f"synthetic grids need H, W >= 16, got {height}x{width}")
    rng = np.random.default_rng(rng)
    if velocity is None:
        velocity = tuple(rng.uniform(-2.0, 2.0, size=2))
    if cells is None:
        cells = [
            RainCell(
                y=rng.uniform(0, height),
                x=rng.uniform(0, width),
                sigma=rng.uniform(min(height, width) / 16, min(height, width) / 6),
                peak=rng.uniform(1.0, 64.0),
            )
            for _ in range(int(rng.integers(2, 5)))
        ]
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    frames = np.zeros((count, height, width))
    for k in range(count):
        for c in cells:
            cy = c.y + velocity[0] * k
            cx = c.x + velocity[1] * k
            var = c.sigma**2 + 2.0 * diffusion * k
            frames[k] += c.peak * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * var))
    return FrameSequence(np.clip(frames, 0.0, MAX_RATE).astype(np.float32), cadence_minutes)


def load_samples(paths, stride: int = 1, resolution: int | None = None) -> list[NowcastSample]:
    """Window every NRF file in ``paths``, checking the grid size if given."""
    samples = []
    for p in paths:
        seq = load_nrf(p)
        if resolution is not None and seq.shape[1:] != (resolution, resolution):
            raise ContractError(
                f"{p}: grid {seq.shape[1]}x{seq.shape[2]} does not match resolution {resolution}"
            )
        samples.extend(make_windows(seq, stride))
    return samples
