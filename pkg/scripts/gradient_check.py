"""Finite-difference check of the training-loss gradient on the micro model.

Prints per-entry analytic vs numeric derivatives for sampled parameters.
"""

import argparse

import torch

from raindiff.denoiser import DenoiserConfig
from raindiff.diffusion import build_schedule, training_loss
from raindiff.gradcheck import finite_difference_check
from raindiff.model import NowcastDiffusion


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--count", type=int, default=128)
    parser.add_argument("--step", type=float, default=1e-3)
    parser.add_argument("--part", choices=("denoiser", "encoder"), default="denoiser")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    torch.manual_seed(args.seed)
    model = NowcastDiffusion(16, DenoiserConfig(levels=2, base_channels=4, embed_dim=8)).double()
    sched = build_schedule(10)
    g = torch.Generator().manual_seed(args.seed)
    x0 = torch.randn(2, 4, 16, 16, dtype=torch.float64, generator=g)
    frames = torch.randn(2, 4, 16, 16, dtype=torch.float64, generator=g)
    t = torch.randint(1, 11, (2,), generator=g)
    eps = torch.randn(x0.shape, dtype=torch.float64, generator=g)
    part = model.denoiser if args.part == "denoiser" else model.encoder
    res = finite_difference_check(
        lambda: training_loss(model, x0, frames, sched, t=t, eps=eps),
        list(part.named_parameters()), args.count, step=args.step, seed=args.seed,
    )
    rows = sorted(zip(res.rel_errors(), res.names, res.analytic, res.numeric), reverse=True)
    for rel, name, a, n in rows[:10]:
        print(f"{name:40s} analytic {a: .6e} numeric {n: .6e} rel {rel:.2e}")
    print(f"max relative error over {len(rows)} entries: {rows[0][0]:.3e}")


if __name__ == "__main__":
    main()
