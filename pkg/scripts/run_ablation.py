"""Eight-arm (WIn, TV, HO) ablation on the frozen phantom at noise std 0.05."""

import argparse
import sys
from pathlib import Path

from dup.cli import main

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--workers", type=int, default=1)
    args, extra = p.parse_known_args()
    sim = args.output / "sim"
    code = main(["simulate", "--phantom", "96x96x8", "--scale", "4", "--noise-std", "0.05", "--seed", str(args.seed), "-o", str(sim)])
    if not code:
        code = main(
            ["ablate", "--input", str(sim / "lr"), "--gt", str(sim / "hr"), "--scale", "4", "--profile", "desk"]
            + ["--seed", str(args.seed), "--workers", str(args.workers), "-o", str(args.output / "ablate"), "-v", *extra]
        )
    if not code:
        print((args.output / "ablate" / "ablation.csv").read_text(), end="")
    sys.exit(code)
