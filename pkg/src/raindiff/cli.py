"""Command line: synth, train, predict, evaluate, render.

Exit status: 0 success, 1 usage/config error, 2 data or contract error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, parse_overrides, read_config_text
from .data import FrameSequence, load_nrf, load_samples, save_nrf, synth_advection
from .errors import ConfigError, ContractError
from .gan_losses import weighted_regularizer
from .metrics import evaluate_report, format_value

log = logging.getLogger("raindiff")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--diffusion-steps", type=int)
    p.add_argument("--fss-n", type=int)
    p.add_argument("--hss-mode", choices=("standard", "paper"))
    p.add_argument("--weight-mode", choices=("max24", "min24"))
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="raindiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write synthetic advected-rain NRF sequences")
    _common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int)

    p = sub.add_parser("train", help="train the conditional diffusion model")
    _common(p)
    p.add_argument("--data", type=Path, required=True, help="directory of .nrf files")
    p.add_argument("--out", type=Path, required=True, help="run directory")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")

    p = sub.add_parser("predict", help="generate 4 future frames from the last 4 inputs")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("evaluate", help="score a forecast NRF against an observed NRF")
    _common(p)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--obs", type=Path, required=True)
    p.add_argument("--output", type=Path, help="CSV path (default: stdout)")

    p = sub.add_parser("render", help="write one PGM image per frame")
    p.add_argument("nrf", type=Path)
    p.add_argument("--out", type=Path, required=True)
    return parser


def effective_config(args, base: dict | None = None) -> RunConfig:
    overrides = {
        "seed": getattr(args, "seed", None),
        "steps": getattr(args, "steps", None),
        "resolution": getattr(args, "resolution", None),
        "diffusion_steps": getattr(args, "diffusion_steps", None),
        "fss_n": getattr(args, "fss_n", None),
        "hss_mode": getattr(args, "hss_mode", None),
        "weight_mode": getattr(args, "weight_mode", None),
    }
    if getattr(args, "count", None) is not None:
        overrides["synth_count"] = args.count
    extra = {}
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        extra[key] = value
    overrides.update(parse_overrides(extra))
    cfg = load_config(getattr(args, "config", None), overrides, base=base)
    log.info("effective config:\n%s", cfg.dumps())
    return cfg


def cmd_synth(args) -> int:
    cfg = effective_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    for i in range(cfg.synth_count):
        rng = np.random.default_rng([cfg.seed, i])
        seq = synth_advection(cfg.synth_frames, cfg.resolution, cfg.resolution, rng)
        save_nrf(seq, args.out / f"seq_{i:04d}.nrf")
    log.info("wrote %d sequences to %s", cfg.synth_count, args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    from .train import Trainer, stack_samples

    cfg = effective_config(args)
    paths = sorted(args.data.glob("*.nrf")) if args.data.is_dir() else []
    if not paths:
        raise ContractError(f"no .nrf files found in {args.data}")
    samples = load_samples(paths, stride=cfg.window_stride, resolution=cfg.resolution)
    if not samples:
        raise ContractError("sequences too short to form any 8-frame window")
    inputs, targets = stack_samples(samples, cfg.norm_mode)
    trainer = Trainer.resume(cfg, args.resume) if args.resume else Trainer(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "config.txt").write_text(cfg.dumps())
    remaining = cfg.steps - trainer.step
    log.info("training %d samples from step %d to %d", len(samples), trainer.step, cfg.steps)
    if remaining > 0:
        trainer.fit(inputs, targets, remaining, out_dir=args.out,
                    on_step=lambda s, l: s % 50 == 0 and log.info("step %d loss %.5f", s, l))
    return EXIT_OK


def cmd_predict(args) -> int:
    from .model import load_checkpoint
    from .train import forecast, schedule_for

    model, state = load_checkpoint(args.checkpoint)
    # the schedule must match training: start from the config saved with the checkpoint
    saved = state.get("extra", {}).get("config")
    cfg = effective_config(args, base=read_config_text(saved) if saved else None)
    seq = load_nrf(args.input)
    if len(seq) < 4:
        raise ContractError(f"{args.input} has {len(seq)} frames, need at least 4")
    if seq.shape[1:] != (model.resolution, model.resolution):
        raise ContractError(
            f"input grid {seq.shape[1]}x{seq.shape[2]} does not match checkpoint "
            f"resolution {model.resolution}"
        )
    rates = forecast(model, seq.frames[-4:], schedule_for(cfg), seed=cfg.seed, mode=cfg.norm_mode)
    save_nrf(FrameSequence(rates, seq.cadence_minutes), args.output)
    return EXIT_OK


def evaluation_csv(pred: np.ndarray, obs: np.ndarray, cfg: RunConfig) -> str:
    report = evaluate_report(pred, obs, n=cfg.fss_n, fss_band=cfg.fss_band, hss_mode=cfg.hss_mode)
    wl1 = weighted_regularizer(pred.astype(np.float64), obs.astype(np.float64), cfg.weight_mode)
    return report.to_csv() + f"weighted_l1,{cfg.weight_mode},{format_value(float(wl1))}\n"


def cmd_evaluate(args) -> int:
    cfg = effective_config(args)
    pred, obs = load_nrf(args.pred), load_nrf(args.obs)
    if pred.shape != obs.shape:
        raise ContractError(f"forecast {pred.shape} and observation {obs.shape} differ")
    text = evaluation_csv(pred.frames, obs.frames, cfg)
    if args.output:
        args.output.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def to_pgm(frame: np.ndarray) -> bytes:
    """Binary P5 image, pixel = round(rate * 255 / 128)."""
    pixels = np.rint(np.asarray(frame, dtype=np.float64) * 255.0 / 128.0)
    pixels = np.clip(pixels, 0, 255).astype(np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def cmd_render(args) -> int:
    seq = load_nrf(args.nrf)
    args.out.mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(seq.frames):
        (args.out / f"frame_{k:03d}.pgm").write_bytes(to_pgm(frame))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"raindiff: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractError, OSError) as exc:
        print(f"raindiff: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
