"""Command-line entry point: ``dup {simulate,restore,evaluate,ablate,replay}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from dup import __version__
from dup.degradation import DegradationModel, bicubic_clip, degrade_clip, generate_phantom
from dup.engine import (
    PROFILES,
    FrameRecord,
    NumericalError,
    RestorationReport,
    arm_config,
    make_config,
    restore_clip,
    run_ablation,
    write_ablation_csv,
)
from dup.metrics import score_clip
from dup.prior_net import NetworkConfig, PriorNetwork, load_checkpoint, save_checkpoint
from dup.video_io import DataError, frame_path, load_clip, read_pgm, read_report, save_clip, write_pgm, write_report

log = logging.getLogger("dup")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST_NAME = "manifest.txt"


class UsageError(Exception):
    pass


# manifests ---------------------------------------------------------------


def write_manifest(path, command: str, argv, values: dict) -> None:
    lines = [f"command={command}", f"tool_version={__version__}", f"argv={json.dumps(list(argv))}"]
    lines += [f"{k}={v}" for k, v in values.items()]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line and "=" in line:
            key, value = line.split("=", 1)
            out[key] = value
    return out


def _flatten(prefix: str, obj) -> dict:
    return {f"{prefix}.{k}": v for k, v in asdict(obj).items()}


# argument helpers ----------------------------------------------------------


def _parse_phantom(text: str) -> tuple[int, int, int]:
    try:
        h, w, t = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxWxT, got {text!r}") from None
    return h, w, t


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_restoration_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", type=int, choices=[2, 4], required=True)
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--no-win", action="store_true", help="re-initialize the network for every frame")
    p.add_argument("--lambda1", type=float, help="TV weight")
    p.add_argument("--lambda2", type=float, help="higher-order weight")
    p.add_argument("--sigma", type=float, help="input drift std between frames")
    p.add_argument("--lr", type=float, help="Adam step size")
    p.add_argument("--max-iters-first", type=int)
    p.add_argument("--max-iters-rest", type=int)
    p.add_argument("--es-start-first", type=int)
    p.add_argument("--es-start-rest", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--levels", type=int, default=NetworkConfig.levels)
    p.add_argument("--features", type=int, default=NetworkConfig.features)
    p.add_argument("--skip-features", type=int, default=NetworkConfig.skip_features)
    p.add_argument("--nondeterministic", action="store_true")
    p.add_argument("--bit-depth", type=int, choices=[8, 16], default=16)


def _configs(args):
    overrides = {
        k: getattr(args, k)
        for k in ("lambda1", "lambda2", "sigma", "lr", "max_iters_first", "max_iters_rest", "es_start_first", "es_start_rest")
        if getattr(args, k) is not None
    }
    # Shorter budgets pull the early-stopping start along unless it was given.
    for which in ("first", "rest"):
        budget = overrides.get(f"max_iters_{which}")
        base = PROFILES[args.profile].get(f"es_start_{which}", getattr(make_config("paper"), f"es_start_{which}"))
        if budget is not None and f"es_start_{which}" not in overrides and base > budget:
            overrides[f"es_start_{which}"] = budget
    try:
        cfg = make_config(
            args.profile,
            scale=args.scale,
            seed=args.seed,
            win_enabled=not args.no_win,
            deterministic=not args.nondeterministic,
            **overrides,
        )
        net_cfg = NetworkConfig(levels=args.levels, features=args.features, skip_features=args.skip_features, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg, net_cfg


def _config_values(args, cfg, net_cfg) -> dict:
    return {"profile": args.profile, "seed": cfg.seed, **_flatten("cfg", cfg), **_flatten("net", net_cfg)}


# commands ------------------------------------------------------------------


def cmd_simulate(args, argv) -> int:
    if (args.input is None) == (args.phantom is None):
        raise UsageError("give exactly one of --input or --phantom")
    if args.phantom is not None:
        h, w, t = args.phantom
        try:
            hr = generate_phantom(h, w, t, seed=args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        hr = load_clip(args.input)
    if not 0 <= args.noise_std <= 1:
        raise UsageError("--noise-std must lie in [0, 1]")
    model = DegradationModel(scale=args.scale, noise_std=args.noise_std, seed=args.seed)
    lr = degrade_clip(hr, model)
    out = Path(args.output)
    save_clip(lr, out / "lr", args.bit_depth)
    if not args.no_hr:
        save_clip(hr, out / "hr", args.bit_depth)
    write_manifest(
        out / MANIFEST_NAME,
        "simulate",
        argv,
        {
            "seed": args.seed,
            "input": args.input or "",
            "phantom": "x".join(map(str, args.phantom)) if args.phantom else "",
            "output": str(out),
            "bit_depth": args.bit_depth,
            **_flatten("model", model),
        },
    )
    log.info("wrote %d LR frames of %dx%d to %s", lr.frame_count, *lr.shape, out / "lr")
    return EXIT_OK


def _records_from_report(path, upto: int) -> list[FrameRecord]:
    rows = [r for r in read_report(path) if r["frame_index"] != "ALL"]
    if len(rows) < upto:
        raise DataError(f"{path}: report lists {len(rows)} frames, checkpoint needs {upto}")

    def opt(v):
        return float(v) if v != "" else None

    return [
        FrameRecord(
            frame_index=int(r["frame_index"]),
            iterations=int(r["iterations"]),
            max_iters=0,
            stop_reason="",
            final_loss=float(r["final_loss"]),
            final_fidelity=float("nan"),
            wall_ms=float(r["wall_ms"]),
            psnr_db=opt(r["psnr_db"]),
            ssim=opt(r["ssim"]),
        )
        for r in rows[:upto]
    ]


def cmd_restore(args, argv) -> int:
    cfg, net_cfg = _configs(args)
    lr = load_clip(args.input)
    gt = load_clip(args.gt) if args.gt else None
    out = Path(args.output)
    sr_dir = out / "sr"
    ckpt_path = out / "checkpoint.dupw"
    report_path = out / "report.csv"

    start_frame, initial_theta, previous = 1, None, None
    if args.resume:
        probe = PriorNetwork(net_cfg)
        done = load_checkpoint(probe, args.resume)
        if done >= lr.frame_count:
            raise DataError(f"{args.resume}: checkpoint already covers all {lr.frame_count} frames")
        start_frame, initial_theta = done + 1, probe.export_params()
        previous = ([read_pgm(frame_path(sr_dir, t)) for t in range(1, done + 1)], _records_from_report(report_path, done))

    write_manifest(
        out / MANIFEST_NAME,
        "restore",
        argv,
        {
            "input": args.input,
            "gt": args.gt or "",
            "output": str(out),
            "resume": args.resume or "",
            **_config_values(args, cfg, net_cfg),
        },
    )
    sr_dir.mkdir(parents=True, exist_ok=True)
    records_so_far = list(previous[1]) if previous else []

    def on_frame(t, net, record, sr):
        write_pgm(frame_path(sr_dir, t), sr, args.bit_depth)
        save_checkpoint(net, ckpt_path, frame_index=t)
        records_so_far.append(record)
        write_report(RestorationReport(records_so_far), report_path)
        log.info("frame %d: %d iterations (%s), loss %.6g", t, record.iterations, record.stop_reason, record.final_loss)

    restore_clip(
        lr, cfg, net_cfg, gt, start_frame=start_frame, initial_theta=initial_theta, previous=previous, on_frame=on_frame
    )
    return EXIT_OK


def _write_scores(scores, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame_index", "psnr_db", "ssim"])
        for t, pair in enumerate(scores.frames, start=1):
            writer.writerow([t, repr(pair.psnr_db), repr(pair.ssim)])
        writer.writerow(["ALL", repr(scores.mean_psnr), repr(scores.mean_ssim)])


def plot_sweep(rows, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method in sorted({r[0] for r in rows}):
        pts = sorted((r[1], r[2]) for r in rows if r[0] == method)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
    ax.set_xlabel("noise std")
    ax.set_ylabel("PSNR (dB)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_evaluate(args, argv) -> int:
    out = Path(args.output)
    if not args.sweep:
        if not args.test or not args.gt:
            raise UsageError("evaluate needs --test and --gt (or --sweep)")
        scores = score_clip(load_clip(args.gt), load_clip(args.test))
        _write_scores(scores, out / "scores.csv")
        write_manifest(out / MANIFEST_NAME, "evaluate", argv, {"test": args.test, "gt": args.gt, "output": str(out)})
        print(f"mean PSNR {scores.mean_psnr:.4f} dB, mean SSIM {scores.mean_ssim:.4f}")
        return EXIT_OK

    if args.scale is None:
        raise UsageError("--sweep needs --scale")
    if (args.gt is None) == (args.phantom is None):
        raise UsageError("--sweep needs exactly one of --gt <hr_dir> or --phantom HxWxT")
    cfg, net_cfg = _configs(args)
    hr = load_clip(args.gt) if args.gt else generate_phantom(*args.phantom, seed=args.seed)
    rows = []
    for std in args.noise_stds:
        lr = degrade_clip(hr, DegradationModel(scale=args.scale, noise_std=std, seed=args.seed))
        sr, report = restore_clip(lr, cfg, net_cfg, hr)
        save_clip(sr, out / f"std_{std:g}" / "sr", args.bit_depth)
        write_report(report, out / f"std_{std:g}" / "report.csv")
        rows.append(("DUP", std, report.mean_psnr, report.mean_ssim))
        base = score_clip(hr, bicubic_clip(lr, args.scale))
        rows.append(("bicubic", std, base.mean_psnr, base.mean_ssim))
        log.info("noise %.3g: DUP %.3f dB, bicubic %.3f dB", std, report.mean_psnr, base.mean_psnr)
    with (out / "sweep.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "noise_std", "psnr_db", "ssim"])
        for method, std, p, s in rows:
            writer.writerow([method, repr(std), repr(p), repr(s)])
    plot_sweep(rows, out / "sweep.png")
    write_manifest(
        out / MANIFEST_NAME,
        "evaluate",
        argv,
        {
            "sweep": "1",
            "gt": args.gt or "",
            "phantom": "x".join(map(str, args.phantom)) if args.phantom else "",
            "noise_stds": ",".join(f"{s:g}" for s in args.noise_stds),
            "output": str(out),
            **_config_values(args, cfg, net_cfg),
        },
    )
    return EXIT_OK


def cmd_ablate(args, argv) -> int:
    cfg, net_cfg = _configs(args)
    lr = load_clip(args.input)
    gt = load_clip(args.gt)
    out = Path(args.output)
    rows = run_ablation(lr, gt, replace(cfg, win_enabled=True), net_cfg, workers=args.workers)
    write_ablation_csv(rows, out / "ablation.csv")
    base = {"input": args.input, "gt": args.gt, "output": str(out), **_config_values(args, cfg, net_cfg)}
    write_manifest(out / MANIFEST_NAME, "ablate", argv, base)
    for row in rows:
        arm = arm_config(cfg, row.win, row.tv, row.ho)
        name = f"win{int(row.win)}_tv{int(row.tv)}_ho{int(row.ho)}"
        write_manifest(out / "arms" / f"{name}.txt", "ablate-arm", argv, {**base, **_flatten("cfg", arm)})
        write_report(row.report, out / "arms" / f"{name}_report.csv")
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    manifest = read_manifest(args.manifest)
    original = json.loads(manifest["argv"])
    if args.output:
        original = _replace_output(original, args.output)
    return main(original)


def _replace_output(argv: list[str], output: str) -> list[str]:
    argv = list(argv)
    for flag in ("-o", "--output"):
        if flag in argv:
            argv[argv.index(flag) + 1] = output
            return argv
    return argv + ["-o", output]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dup", description="Self-supervised video super-resolution with a deep prior.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="degrade an HR clip (or a synthetic phantom) into an LR clip")
    p.add_argument("--input", help="directory of HR frame_%%06d.pgm files")
    p.add_argument("--phantom", type=_parse_phantom, help="synthetic phantom size HxWxT")
    p.add_argument("--scale", type=int, choices=[2, 4], required=True)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-hr", action="store_true", help="do not write the HR ground truth")
    p.add_argument("--bit-depth", type=int, choices=[8, 16], default=16)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("restore", help="super-resolve an LR clip")
    p.add_argument("--input", required=True)
    p.add_argument("--gt", help="HR ground truth for PSNR/SSIM columns")
    p.add_argument("--resume", help="DUPW checkpoint written by an interrupted run into the same output directory")
    p.add_argument("-o", "--output", required=True)
    _add_restoration_args(p)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("evaluate", help="score a restored clip, or sweep noise levels")
    p.add_argument("--test")
    p.add_argument("--gt")
    p.add_argument("--sweep", action="store_true")
    p.add_argument("--phantom", type=_parse_phantom)
    p.add_argument("--noise-stds", type=_parse_float_list, default=[0.01, 0.05, 0.1])
    p.add_argument("-o", "--output", required=True)
    _add_restoration_args(p)
    p._option_string_actions["--scale"].required = False
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the (WIn, TV, HO) ablation grid")
    p.add_argument("--input", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    _add_restoration_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", help="write to a different output directory")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"dup {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"dup {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"dup {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
