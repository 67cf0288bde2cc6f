"""Central finite-difference check of analytic gradients on sampled parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch
from torch import nn


@dataclass
class GradCheckResult:
    names: list[str]
    analytic: list[float]
    numeric: list[float]

    def rel_errors(self, floor: float = 1e-8) -> list[float]:
        """|a - n| / max(|a| + |n|, floor).

        The floor must sit above the difference quotient's round-off
        (~1e-16 / step), otherwise structurally zero gradients count as misses.
        """
        return [
            abs(a - n) / max(abs(a) + abs(n), floor)
            for a, n in zip(self.analytic, self.numeric)
        ]

    def max_rel_error(self, floor: float = 1e-8) -> float:
        return max(self.rel_errors(floor))


def finite_difference_check(
    loss_fn: Callable[[], torch.Tensor],
    params: list[tuple[str, nn.Parameter]],
    count: int,
    step: float = 1e-3,
    seed: int = 0,
) -> GradCheckResult:
    """Compare autograd against (f(p+h) - f(p-h)) / 2h on ``count`` scalar entries.

    Entries are drawn uniformly over all elements of ``params``. ``loss_fn``
    must be deterministic (fixed t, noise and batch statistics).
    """
    for _, p in params:
        p.grad = None
    loss_fn().backward()

    sizes = torch.tensor([p.numel() for _, p in params])
    offsets = torch.cumsum(sizes, 0) - sizes
    g = torch.Generator().manual_seed(seed)
    picks = torch.randperm(int(sizes.sum()), generator=g)[:count]

    names, analytic, numeric = [], [], []
    with torch.no_grad():
        for flat_idx in picks.tolist():
            k = int(torch.searchsorted(offsets, flat_idx, right=True)) - 1
            name, p = params[k]
            i = flat_idx - int(offsets[k])
            flat = p.view(-1)
            old = flat[i].item()
            flat[i] = old + step
            up = loss_fn().item()
            flat[i] = old - step
            down = loss_fn().item()
            flat[i] = old
            names.append(f"{name}[{i}]")
            analytic.append(p.grad.view(-1)[i].item())
            numeric.append((up - down) / (2 * step))
    return GradCheckResult(names, analytic, numeric)
