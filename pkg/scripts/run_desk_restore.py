"""Simulate the frozen phantom and restore it with the desk profile.

    python3 scripts/run_desk_restore.py -o runs/desk [--noise-std 0.05]
"""

import argparse
import sys
from pathlib import Path

from dup.cli import main
from dup.degradation import bicubic_clip
from dup.metrics import score_clip
from dup.video_io import load_clip, read_report


def run(out: Path, noise_std: float, seed: int, extra: list[str]) -> int:
    sim = out / "sim"
    code = main(["simulate", "--phantom", "96x96x8", "--scale", "4", "--noise-std", str(noise_std), "--seed", str(seed), "-o", str(sim)])
    if code:
        return code
    args = ["restore", "--input", str(sim / "lr"), "--gt", str(sim / "hr"), "--scale", "4", "--profile", "desk"]
    code = main(args + ["--seed", str(seed), "-o", str(out / "restore"), "-v", *extra])
    if code:
        return code
    summary = read_report(out / "restore" / "report.csv")[-1]
    base = score_clip(load_clip(sim / "hr"), bicubic_clip(load_clip(sim / "lr"), 4))
    print(f"DUP     {float(summary['psnr_db']):.3f} dB  SSIM {float(summary['ssim']):.4f}")
    print(f"bicubic {base.mean_psnr:.3f} dB  SSIM {base.mean_ssim:.4f}")
    return 0


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=7)
    args, extra = p.parse_known_args()
    sys.exit(run(args.output, args.noise_std, args.seed, extra))
