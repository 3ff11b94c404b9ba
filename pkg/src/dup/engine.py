"""Frame-by-frame restoration: Adam on the prior network, plateau-based early
stopping, the drifting noise input and weight inheritance between frames."""

from __future__ import annotations

import contextlib
import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from dup.degradation import DegradationModel
from dup.metrics import psnr, ssim
from dup.prior_net import DegradationOp, NetworkConfig, PriorNetwork, objective, to_tensor
from dup.regularizers import RegularizerWeights
from dup.video_io import DataError, VideoClip

INPUT_STREAM = 0x696E7075
INIT_STREAM = 0x696E6974
ABLATION_HEADER = ["win", "tv", "ho", "psnr_db", "ssim", "mean_iters", "wall_s"]


class NumericalError(RuntimeError):
    """The optimization produced a non-finite loss."""


@dataclass(frozen=True)
class RestorationConfig:
    scale: int = 4
    lambda1: float = 0.01
    lambda2: float = 0.01
    charbonnier_eps: float = 1e-8
    sigma: float = 0.03
    lr: float = 0.01
    max_iters_first: int = 3000
    max_iters_rest: int = 2000
    es_start_first: int = 2000
    es_start_rest: int = 1000
    patience_first: int = 100
    patience_rest: int = 50
    plateau_rel_tol: float = 1e-4
    loss_window: int = 50
    lanczos_a: int = 3
    seed: int = 0
    win_enabled: bool = True
    deterministic: bool = True

    def __post_init__(self):
        if self.es_start_first > self.max_iters_first or self.es_start_rest > self.max_iters_rest:
            raise ValueError("early-stopping start must not exceed the iteration budget")
        if min(self.max_iters_first, self.max_iters_rest, self.patience_first, self.patience_rest, self.loss_window) < 1:
            raise ValueError("budgets, patience and window must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0 or self.sigma < 0 or self.lr <= 0:
            raise ValueError("lambda1, lambda2, sigma must be nonnegative and lr positive")

    @property
    def weights(self) -> RegularizerWeights:
        return RegularizerWeights(self.lambda1, self.lambda2, self.charbonnier_eps)

    @property
    def degradation(self) -> DegradationModel:
        return DegradationModel(scale=self.scale, lanczos_a=self.lanczos_a)

    def budget(self, which: str) -> tuple[int, int, int]:
        """(max_iters, es_start, patience) for ``"first"`` or ``"rest"``."""
        if which == "first":
            return self.max_iters_first, self.es_start_first, self.patience_first
        if which == "rest":
            return self.max_iters_rest, self.es_start_rest, self.patience_rest
        raise ValueError(f"budget must be 'first' or 'rest', got {which!r}")


PROFILES = {
    "paper": {},
    "desk": dict(
        max_iters_first=600,
        es_start_first=400,
        patience_first=20,
        max_iters_rest=400,
        es_start_rest=200,
        patience_rest=10,
        lambda1=0.002,
        lambda2=0.02,
    ),
}


def make_config(profile: str = "desk", **overrides) -> RestorationConfig:
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    return RestorationConfig(**{**PROFILES[profile], **overrides})


class PlateauMonitor:
    """Incremental form of :func:`plateau_stop`; ``update`` returns True once
    the trailing-window mean has stalled for ``patience`` steps."""

    def __init__(self, es_start: int, patience: int, window: int, rel_tol: float):
        self.es_start, self.patience, self.window, self.rel_tol = es_start, patience, window, rel_tol
        self._recent: list[float] = []
        self._index = -1
        self._best: Optional[float] = None
        self._stalled = 0

    def update(self, loss: float) -> bool:
        self._index += 1
        self._recent.append(loss)
        if len(self._recent) > self.window:
            self._recent.pop(0)
        if self._index < self.es_start + self.window - 1:
            return False
        smoothed = math.fsum(self._recent) / self.window
        if self._best is None:
            self._best = smoothed
            return False
        if self._best - smoothed > self.rel_tol * abs(self._best):
            self._best = smoothed
            self._stalled = 0
            return False
        self._stalled += 1
        return self._stalled >= self.patience


def plateau_stop(loss_trace, es_start: int, patience: int, window: int = 50, rel_tol: float = 1e-4) -> Optional[int]:
    """Index at which the windowed loss mean is considered stable, or None.

    The first full window lying after ``es_start`` sets the reference; each
    later index either improves on the best mean by more than
    ``rel_tol * best`` or counts towards ``patience``.
    """
    monitor = PlateauMonitor(es_start, patience, window, rel_tol)
    for i, loss in enumerate(loss_trace):
        if monitor.update(float(loss)):
            return i
    return None


@dataclass(frozen=True)
class NoiseInput:
    z: np.ndarray
    frame_index: int


def input_noise(shape, seed: int, t: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), INPUT_STREAM, int(t)]))
    return rng.standard_normal(shape)


def make_input(prev: Optional[NoiseInput], shape, sigma: float, seed: int, t: int) -> NoiseInput:
    """``z_1 = n_1`` and ``z_t = z_{t-1} + sigma * n_t``."""
    shape = tuple(shape)
    if t < 1:
        raise ValueError("frame index is 1-based")
    if (prev is None) != (t == 1):
        raise ValueError("a previous input is required exactly when t >= 2")
    if prev is None:
        return NoiseInput(input_noise(shape, seed, 1), 1)
    if prev.z.shape != shape:
        raise DataError(f"previous input has shape {prev.z.shape}, expected {shape}")
    if sigma == 0:
        return NoiseInput(prev.z.copy(), t)
    return NoiseInput(prev.z + sigma * input_noise(shape, seed, t), t)


def inputs_up_to(shape, sigma: float, seed: int, t: int) -> NoiseInput:
    z = make_input(None, shape, sigma, seed, 1)
    for k in range(2, t + 1):
        z = make_input(z, shape, sigma, seed, k)
    return z


@dataclass
class FrameResult:
    sr: np.ndarray
    trace: list[float]
    iterations: int
    max_iters: int
    stop_reason: str  # "plateau" or "budget"
    final_loss: float
    final_fidelity: float


@contextlib.contextmanager
def deterministic_mode(enabled: bool):
    previous = torch.are_deterministic_algorithms_enabled()
    if enabled:
        torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(previous)


def restore_frame(
    lr_frame,
    net: PriorNetwork,
    z: NoiseInput,
    model: DegradationModel,
    cfg: RestorationConfig,
    budget: str = "first",
) -> FrameResult:
    """Fit ``net`` to one LR frame and leave it holding the best-loss parameters.

    Adam moments start from zero on every call; only the parameters carry over
    between frames.
    """
    lr_frame = np.asarray(lr_frame, dtype=np.float64)
    s = model.scale
    hr_shape = (lr_frame.shape[0] * s, lr_frame.shape[1] * s)
    if z.z.shape != hr_shape:
        raise DataError(f"noise input {z.z.shape} does not match scale {s} x LR frame {lr_frame.shape}")
    net.config.check_shape(*hr_shape)
    max_iters, es_start, patience = cfg.budget(budget)
    dtype = net.config.torch_dtype
    op = DegradationOp(hr_shape, model, dtype)
    weights = cfg.weights
    zt, target = to_tensor(z.z, dtype), to_tensor(lr_frame, dtype)
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.lr, betas=(0.9, 0.999), eps=1e-8)
    monitor = PlateauMonitor(es_start, patience, cfg.loss_window, cfg.plateau_rel_tol)

    trace: list[float] = []
    best_loss, best_params = math.inf, None
    stop_reason = "budget"
    net.train()
    for it in range(max_iters):
        optimizer.zero_grad(set_to_none=True)
        loss, _ = objective(net(zt), target, op, weights)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise NumericalError(f"non-finite loss {value} at iteration {it} of frame {z.frame_index}")
        trace.append(value)
        if value < best_loss:
            best_loss = value
            best_params = [p.detach().clone() for p in net.parameters()]
        if monitor.update(value):
            stop_reason = "plateau"
            break
        loss.backward()
        optimizer.step()

    with torch.no_grad():
        for p, best in zip(net.parameters(), best_params):
            p.copy_(best)
        out = net(zt)
        loss, fidelity = objective(out, target, op, weights)
    return FrameResult(
        sr=out[0, 0].double().numpy().copy(),
        trace=trace,
        iterations=len(trace),
        max_iters=max_iters,
        stop_reason=stop_reason,
        final_loss=float(loss),
        final_fidelity=float(fidelity),
    )


@dataclass
class FrameRecord:
    frame_index: int
    iterations: int
    max_iters: int
    stop_reason: str
    final_loss: float
    final_fidelity: float
    wall_ms: float
    trace: list[float] = field(repr=False, default_factory=list)
    psnr_db: Optional[float] = None
    ssim: Optional[float] = None


@dataclass
class RestorationReport:
    records: list[FrameRecord] = field(default_factory=list)

    def _finite_mean(self, name: str) -> Optional[float]:
        vals = [getattr(r, name) for r in self.records]
        vals = [v for v in vals if v is not None and math.isfinite(v)]
        return sum(vals) / len(vals) if vals else None

    @property
    def mean_psnr(self) -> Optional[float]:
        return self._finite_mean("psnr_db")

    @property
    def mean_ssim(self) -> Optional[float]:
        return self._finite_mean("ssim")

    @property
    def total_iterations(self) -> int:
        return sum(r.iterations for r in self.records)

    @property
    def wall_s(self) -> float:
        return sum(r.wall_ms for r in self.records) / 1000.0


def frame_init_seed(seed: int, t: int) -> int:
    """Initialization seed for a fresh network at 1-based frame ``t``."""
    if t == 1:
        return int(seed)
    return int(np.random.SeedSequence([int(seed), INIT_STREAM, int(t)]).generate_state(1)[0])


def check_clip_dimensions(lr_clip: VideoClip, scale: int, net_cfg: NetworkConfig) -> None:
    h, w = lr_clip.shape
    net_cfg.check_shape(h * scale, w * scale)


FrameCallback = Callable[[int, PriorNetwork, FrameRecord, np.ndarray], None]


def restore_clip(
    lr_clip: VideoClip,
    cfg: RestorationConfig,
    net_cfg: NetworkConfig,
    hr_clip: Optional[VideoClip] = None,
    *,
    start_frame: int = 1,
    initial_theta=None,
    previous: Optional[tuple[list[np.ndarray], list[FrameRecord]]] = None,
    on_frame_start: Optional[Callable[[int, PriorNetwork], None]] = None,
    on_frame: Optional[FrameCallback] = None,
) -> tuple[VideoClip, RestorationReport]:
    """Restore every frame in temporal order.

    With weight inheritance frame ``t`` starts from the parameters frame
    ``t - 1`` ended with and uses the shorter ``rest`` budget; without it every
    frame starts from a freshly seeded network and the ``first`` budget.
    ``start_frame``/``initial_theta``/``previous`` resume an interrupted run.
    """
    s = cfg.scale
    check_clip_dimensions(lr_clip, s, net_cfg)
    if hr_clip is not None:
        expected = (lr_clip.shape[0] * s, lr_clip.shape[1] * s)
        if hr_clip.frame_count != lr_clip.frame_count or hr_clip.shape != expected:
            raise DataError(
                f"ground truth must have {lr_clip.frame_count} frames of {expected[0]}x{expected[1]}, "
                f"got {hr_clip.frame_count} of {hr_clip.shape[0]}x{hr_clip.shape[1]}"
            )
    if not 1 <= start_frame <= lr_clip.frame_count:
        raise ValueError(f"start_frame {start_frame} outside 1..{lr_clip.frame_count}")
    hr_shape = (lr_clip.shape[0] * s, lr_clip.shape[1] * s)
    model = cfg.degradation

    sr_frames, records = ([], []) if previous is None else (list(previous[0]), list(previous[1]))
    if len(sr_frames) != start_frame - 1 or len(records) != start_frame - 1:
        raise ValueError("previous results must cover exactly the frames before start_frame")

    net = PriorNetwork(replace(net_cfg, seed=frame_init_seed(net_cfg.seed, 1)))
    if initial_theta is not None:
        net.import_params(initial_theta)
    z = None if start_frame == 1 else inputs_up_to(hr_shape, cfg.sigma, cfg.seed, start_frame - 1)

    with deterministic_mode(cfg.deterministic):
        for t in range(start_frame, lr_clip.frame_count + 1):
            z = make_input(z, hr_shape, cfg.sigma, cfg.seed, t)
            inherit = cfg.win_enabled and t > 1
            if not inherit and t > 1:
                net.reset_parameters(frame_init_seed(net_cfg.seed, t))
            if on_frame_start is not None:
                on_frame_start(t, net)
            started = time.perf_counter()
            result = restore_frame(lr_clip[t - 1], net, z, model, cfg, "rest" if inherit else "first")
            wall_ms = (time.perf_counter() - started) * 1000.0
            sr = np.clip(result.sr, 0.0, 1.0)
            record = FrameRecord(
                frame_index=t,
                iterations=result.iterations,
                max_iters=result.max_iters,
                stop_reason=result.stop_reason,
                final_loss=result.final_loss,
                final_fidelity=result.final_fidelity,
                wall_ms=wall_ms,
                trace=result.trace,
            )
            if hr_clip is not None:
                record.psnr_db = psnr(hr_clip[t - 1], sr)
                record.ssim = ssim(hr_clip[t - 1], sr)
            sr_frames.append(sr)
            records.append(record)
            if on_frame is not None:
                on_frame(t, net, record, sr)
    return VideoClip(np.stack(sr_frames)), RestorationReport(records)


ARMS = [(win, tv, ho) for win in (False, True) for ho in (False, True) for tv in (False, True)]


@dataclass
class AblationRow:
    win: bool
    tv: bool
    ho: bool
    psnr_db: float
    ssim: float
    mean_iters: float
    wall_s: float
    config: RestorationConfig = field(repr=False, default=None)
    report: RestorationReport = field(repr=False, default=None)


def arm_config(cfg: RestorationConfig, win: bool, tv: bool, ho: bool) -> RestorationConfig:
    return replace(cfg, win_enabled=win, lambda1=cfg.lambda1 if tv else 0.0, lambda2=cfg.lambda2 if ho else 0.0)


def _run_arm(args) -> AblationRow:
    lr_clip, hr_clip, cfg, net_cfg, (win, tv, ho) = args
    arm_cfg = arm_config(cfg, win, tv, ho)
    started = time.perf_counter()
    _, report = restore_clip(lr_clip, arm_cfg, net_cfg, hr_clip)
    wall_s = time.perf_counter() - started
    return AblationRow(
        win=win,
        tv=tv,
        ho=ho,
        psnr_db=report.mean_psnr,
        ssim=report.mean_ssim,
        mean_iters=report.total_iterations / len(report.records),
        wall_s=wall_s,
        config=arm_cfg,
        report=report,
    )


def run_ablation(
    lr_clip: VideoClip,
    hr_clip: VideoClip,
    cfg: RestorationConfig,
    net_cfg: NetworkConfig,
    workers: int = 1,
    arms=None,
) -> list[AblationRow]:
    """Restore the clip once per (WIn, TV, HO) arm, all with the same seeds.

    Arms that are switched off zero the matching regularization weight.
    """
    check_clip_dimensions(lr_clip, cfg.scale, net_cfg)
    jobs = [(lr_clip, hr_clip, cfg, net_cfg, arm) for arm in (ARMS if arms is None else arms)]
    if workers <= 1:
        return [_run_arm(job) for job in jobs]
    import multiprocessing

    with ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("spawn")) as pool:
        return list(pool.map(_run_arm, jobs))


def write_ablation_csv(rows: list[AblationRow], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ABLATION_HEADER)
        for r in rows:
            writer.writerow([int(r.win), int(r.tv), int(r.ho), repr(r.psnr_db), repr(r.ssim), repr(r.mean_iters), f"{r.wall_s:.3f}"])
