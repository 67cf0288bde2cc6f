"""Train a small affine denoiser on a fixed Gaussian field and compare sample moments.

    python scripts/distribution_recovery.py --steps 10000 --samples 500
"""

import argparse
import logging

from raindiff.experiments import distribution_recovery


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=10_000)
    parser.add_argument("--samples", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    r = distribution_recovery(steps=args.steps, samples=args.samples, seed=args.seed)
    print(f"max |mean error|         {r.max_mean_error:.4f}  (target <= 0.1)")
    print(f"max variance rel. error  {r.max_variance_rel_error:.4f}  (target <= 0.25)")
    print(f"wall time                {r.seconds:.0f} s")


if __name__ == "__main__":
    main()
