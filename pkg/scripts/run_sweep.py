"""Noise sweep on the frozen phantom: DUP and bicubic at each noise level.

Writes sweep.csv and sweep.png into the output directory.
"""

import argparse
import sys

from dup.cli import main

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--noise-stds", default="0.01,0.05,0.1")
    p.add_argument("--seed", type=int, default=7)
    args, extra = p.parse_known_args()
    sys.exit(
        main(
            ["evaluate", "--sweep", "--phantom", "96x96x8", "--scale", "4", "--profile", "desk", "--noise-stds", args.noise_stds]
            + ["--seed", str(args.seed), "-o", args.output, "-v", *extra]
        )
    )
