"""Forecast verification: CSI, HSS, FSS and MSE on mm/h grids.

Degenerate denominators yield ``UNDEFINED`` (NaN) instead of raising, so a
batch evaluation never stops on an empty or all-dry grid.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError

UNDEFINED = float("nan")

# exceedance thresholds in mm/h; "0-2" is the light/no-rain band (value <= 2)
BANDS = ("0-2", ">2", ">4", ">8")
THRESHOLDS = {">2": 2.0, ">4": 4.0, ">8": 8.0}


def is_undefined(value: float) -> bool:
    return isinstance(value, float) and math.isnan(value)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


def binarize(field: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(field) > threshold


def band_mask(field: np.ndarray, band: str) -> np.ndarray:
    if band == "0-2":
        return np.asarray(field) <= 2.0
    try:
        return binarize(field, THRESHOLDS[band])
    except KeyError:
        raise ConfigError(f"unknown band {band!r}; expected one of {BANDS}") from None


def _check_shapes(a, b) -> None:
    if np.shape(a) != np.shape(b):
        raise ContractError(f"shape mismatch {np.shape(a)} vs {np.shape(b)}")


def _exact_mean(values: np.ndarray) -> float:
    # correctly rounded sum: result does not depend on summation order
    values = np.asarray(values, dtype=np.float64).ravel()
    return math.fsum(values.tolist()) / values.size


def confusion(pred_mask: np.ndarray, obs_mask: np.ndarray) -> ConfusionCounts:
    _check_shapes(pred_mask, obs_mask)
    p = np.asarray(pred_mask, dtype=bool)
    o = np.asarray(obs_mask, dtype=bool)
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & o)),
        fp=int(np.count_nonzero(p & ~o)),
        fn=int(np.count_nonzero(~p & o)),
        tn=int(np.count_nonzero(~p & ~o)),
    )


def csi(c: ConfusionCounts) -> float:
    den = c.tp + c.fp + c.fn
    return c.tp / den if den else UNDEFINED


def hss(c: ConfusionCounts, mode: str = "standard") -> float:
    """Heidke skill score.

    ``standard``: 2(TP*TN - FN*FP) / [(TP+FN)(FN+TN) + (TP+FP)(FP+TN)].
    ``paper``: (TP*TN - FN*FP) / [(TP+TN)(FN+TN) + (TP+FP)(FP+TN)], the
    printed variant, which does not reach 1 for a perfect forecast.
    """
    tp, fp, fn, tn = c.tp, c.fp, c.fn, c.tn
    if mode == "standard":
        num = 2 * (tp * tn - fn * fp)
        den = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn)
    elif mode == "paper":
        num = tp * tn - fn * fp
        den = (tp + tn) * (fn + tn) + (tp + fp) * (fp + tn)
    else:
        raise ConfigError(f"hss mode must be 'standard' or 'paper', got {mode!r}")
    return num / den if den else UNDEFINED


def neighborhood_fraction(mask: np.ndarray, n: int) -> np.ndarray:
    """Mean of ``mask`` over the n x n window around each cell.

    Windows are truncated at the borders and averaged over the valid cells only.
    Works on the last two axes.
    """
    if n < 1 or n % 2 == 0:
        raise ConfigError(f"FSS neighborhood must be a positive odd integer, got {n}")
    m = np.asarray(mask, dtype=np.float64)
    r = n // 2
    pad = [(0, 0)] * (m.ndim - 2) + [(r + 1, r), (r + 1, r)]
    # summed-area tables give exact integer window sums
    s = np.pad(m, pad).cumsum(axis=-2).cumsum(axis=-1)
    ones = np.pad(np.ones(m.shape[-2:]), [(r + 1, r), (r + 1, r)]).cumsum(0).cumsum(1)
    h, w = m.shape[-2:]

    def window(table):
        return (
            table[..., n : n + h, n : n + w]
            - table[..., 0:h, n : n + w]
            - table[..., n : n + h, 0:w]
            + table[..., 0:h, 0:w]
        )

    return window(s) / window(ones)


def fss_from_masks(pred_mask: np.ndarray, obs_mask: np.ndarray, n: int) -> float:
    _check_shapes(pred_mask, obs_mask)
    pf = neighborhood_fraction(pred_mask, n)
    po = neighborhood_fraction(obs_mask, n)
    mse_n = _exact_mean((pf - po) ** 2)
    mse_ref = _exact_mean(pf**2) + _exact_mean(po**2)
    if mse_ref == 0:
        return UNDEFINED
    return float(1.0 - mse_n / mse_ref)


def fss(pred: np.ndarray, obs: np.ndarray, threshold: float, n: int) -> float:
    """Fractions skill score of the ``> threshold`` event at neighborhood ``n``."""
    _check_shapes(pred, obs)
    return fss_from_masks(binarize(pred, threshold), binarize(obs, threshold), n)


def mse_metric(pred: np.ndarray, obs: np.ndarray) -> float:
    _check_shapes(pred, obs)
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(obs, dtype=np.float64)
    return _exact_mean(diff**2)


@dataclass
class SkillReport:
    csi: dict[str, float]
    hss: dict[str, float]
    fss: float
    mse: float
    n: int
    fss_band: str = ">2"
    hss_mode: str = "standard"
    counts: dict[str, ConfusionCounts] = field(default_factory=dict)

    def rows(self) -> list[tuple[str, str, float]]:
        out = [("csi", b, self.csi[b]) for b in BANDS]
        out += [("hss", b, self.hss[b]) for b in BANDS]
        out.append(("fss", self.fss_band, self.fss))
        out.append(("mse", "all", self.mse))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "band", "value"])
        for metric, band, value in self.rows():
            writer.writerow([metric, band, format_value(value)])
        return buf.getvalue()


def format_value(value: float) -> str:
    return "undefined" if is_undefined(value) else f"{value:.6f}"


def evaluate_report(
    pred_frames: np.ndarray,
    obs_frames: np.ndarray,
    n: int = 9,
    fss_band: str = ">2",
    hss_mode: str = "standard",
) -> SkillReport:
    """Pool contingency counts over every frame and pixel, then score.

    FSS is computed per frame and pooled the same way: MSE(n) and the reference
    are averaged over all frames before taking the ratio.
    """
    _check_shapes(pred_frames, obs_frames)
    pred = np.asarray(pred_frames, dtype=np.float64)
    obs = np.asarray(obs_frames, dtype=np.float64)
    counts = {b: confusion(band_mask(pred, b), band_mask(obs, b)) for b in BANDS}
    return SkillReport(
        csi={b: csi(c) for b, c in counts.items()},
        hss={b: hss(c, hss_mode) for b, c in counts.items()},
        fss=fss_from_masks(band_mask(pred, fss_band), band_mask(obs, fss_band), n),
        mse=mse_metric(pred, obs),
        n=n,
        fss_band=fss_band,
        hss_mode=hss_mode,
        counts=counts,
    )
