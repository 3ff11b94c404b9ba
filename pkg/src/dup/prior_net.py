"""Encoder-decoder prior network, its loss and the ``DUPW`` checkpoint format."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from dup.degradation import DegradationModel, downsample_matrix, lanczos_upsample_matrix
from dup.regularizers import RegularizerWeights, ho_torch, tv_torch
from dup.video_io import DataError

CHECKPOINT_MAGIC = b"DUPW"
_HEADER = struct.Struct("<4s8sQI")  # magic, config hash, theta length, frame index

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class NetworkConfig:
    levels: int = 4
    features: int = 128
    skip_features: int = 16
    kernel_size: int = 3
    leaky_slope: float = 0.2
    upsample_lanczos_a: int = 2
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.levels < 1 or self.features < 1 or self.skip_features < 1:
            raise ValueError("levels, features and skip_features must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return _DTYPES[self.dtype]

    @property
    def divisor(self) -> int:
        return 2**self.levels

    def architecture_hash(self) -> bytes:
        """8-byte digest of the fields that determine the parameter layout."""
        arch = {k: v for k, v in asdict(self).items() if k not in ("seed", "dtype")}
        return hashlib.sha256(json.dumps(arch, sort_keys=True).encode()).digest()[:8]

    def check_shape(self, height: int, width: int) -> None:
        d = self.divisor
        if height % d or width % d:
            raise DataError(
                f"network input {height}x{width} must be divisible by 2**levels = {d} "
                f"(levels={self.levels}); choose LR dimensions so that scale x LR size is a multiple of {d}"
            )


def _block(cin: int, cout: int, k: int, stride: int, slope: float) -> list[nn.Module]:
    return [
        nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2, padding_mode="reflect" if k > 1 else "zeros"),
        nn.BatchNorm2d(cout, track_running_stats=False),
        nn.LeakyReLU(slope),
    ]


class LanczosUp2(nn.Module):
    """Separable x2 Lanczos interpolation applied as two matrix products."""

    def __init__(self, a: int):
        super().__init__()
        self.a = a
        self._cache: dict = {}

    def _matrix(self, n: int, x: torch.Tensor) -> torch.Tensor:
        key = (n, x.dtype)
        if key not in self._cache:
            self._cache[key] = torch.tensor(lanczos_upsample_matrix(n, 2, self.a), dtype=x.dtype)
        return self._cache[key]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        rows = self._matrix(x.shape[-2], x)
        cols = self._matrix(x.shape[-1], x)
        return rows @ x @ cols.T


class PriorNetwork(nn.Module):
    """Maps a single-channel noise image to an image of the same size in (0, 1).

    Each encoder level halves the resolution with a stride-2 conv followed by a
    stride-1 conv; a narrow 1x1 skip branch is taken from the level input and
    concatenated back in the mirrored decoder level after Lanczos x2
    upsampling. Batch norm always normalizes with the statistics of the current
    activation.
    """

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        c, k, a = config, config.kernel_size, config.leaky_slope
        self.skips = nn.ModuleList()
        self.encoders = nn.ModuleList()
        self.decoders = nn.ModuleList()
        cin = 1
        for _ in range(c.levels):
            self.skips.append(nn.Sequential(*_block(cin, c.skip_features, 1, 1, a)))
            self.encoders.append(nn.Sequential(*_block(cin, c.features, k, 2, a), *_block(c.features, c.features, k, 1, a)))
            cin = c.features
        for _ in range(c.levels):
            self.decoders.append(
                nn.Sequential(*_block(c.features + c.skip_features, c.features, k, 1, a), *_block(c.features, c.features, 1, 1, a))
            )
        self.up = LanczosUp2(c.upsample_lanczos_a)
        self.head = nn.Conv2d(c.features, 1, 1)
        self.to(c.torch_dtype)
        self.reset_parameters(c.seed)
        self.init_state = self.export_params()

    def reset_parameters(self, seed: int) -> None:
        """He-uniform conv weights, zero biases, unit/zero batch-norm affine."""
        gen = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for module in self.modules():
                if isinstance(module, nn.Conv2d):
                    fan_in = module.weight[0].numel()
                    bound = (6.0 / fan_in) ** 0.5
                    w = torch.rand(module.weight.shape, generator=gen, dtype=torch.float64)
                    module.weight.copy_((2.0 * w - 1.0) * bound)
                    module.bias.zero_()
                elif isinstance(module, nn.BatchNorm2d):
                    module.weight.fill_(1.0)
                    module.bias.zero_()

    @property
    def num_params(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def export_params(self) -> np.ndarray:
        with torch.no_grad():
            return torch.cat([p.reshape(-1) for p in self.parameters()]).numpy().copy()

    def import_params(self, theta) -> None:
        theta = np.asarray(theta)
        if theta.ndim != 1 or theta.size != self.num_params:
            raise ValueError(f"parameter vector has length {theta.size}, network expects {self.num_params}")
        flat = torch.as_tensor(theta).to(self.config.torch_dtype)
        offset = 0
        with torch.no_grad():
            for p in self.parameters():
                n = p.numel()
                p.copy_(flat[offset : offset + n].view_as(p))
                offset += n

    @property
    def theta(self) -> np.ndarray:
        return self.export_params()

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        x = z
        skips = []
        for skip, enc in zip(self.skips, self.encoders):
            skips.append(skip(x))
            x = enc(x)
        for level in reversed(range(self.config.levels)):
            x = self.decoders[level](torch.cat([self.up(x), skips[level]], dim=1))
        return torch.sigmoid(self.head(x))


def init_network(config: NetworkConfig) -> PriorNetwork:
    return PriorNetwork(config)


def export_params(net: PriorNetwork) -> np.ndarray:
    return net.export_params()


def import_params(net: PriorNetwork, theta) -> None:
    net.import_params(theta)


def to_tensor(frame, dtype: torch.dtype) -> torch.Tensor:
    return torch.tensor(np.asarray(frame, dtype=np.float64), dtype=dtype)[None, None]


def forward(net: PriorNetwork, z) -> np.ndarray:
    """Evaluate the network on a 2-D grid and return a 2-D float64 array."""
    z = np.asarray(z)
    net.config.check_shape(*z.shape)
    with torch.no_grad():
        out = net(to_tensor(z, net.config.torch_dtype))
    return out[0, 0].double().numpy()


class DegradationOp:
    """Tensor form of the linear part of the degradation for a fixed HR size."""

    def __init__(self, hr_shape: tuple[int, int], model: DegradationModel, dtype: torch.dtype):
        h, w = hr_shape
        self.model = model
        self.rows = torch.tensor(downsample_matrix(h, model.scale, model.lanczos_a), dtype=dtype)
        self.cols = torch.tensor(downsample_matrix(w, model.scale, model.lanczos_a), dtype=dtype)

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        return self.rows @ x @ self.cols.T


def objective(
    out: torch.Tensor, target: torch.Tensor, op: DegradationOp, weights: RegularizerWeights
) -> tuple[torch.Tensor, torch.Tensor]:
    """Total loss and its fidelity part for a network output ``out``."""
    residual = target - op(out)
    fidelity = 0.5 * (residual * residual).sum()
    loss = fidelity
    if weights.lambda1:
        loss = loss + weights.lambda1 * tv_torch(out, weights.charbonnier_eps)
    if weights.lambda2:
        loss = loss + weights.lambda2 * ho_torch(out)
    return loss, fidelity


def _check_pair(z: np.ndarray, lr_frame: np.ndarray, model: DegradationModel) -> None:
    s = model.scale
    if z.shape != (lr_frame.shape[0] * s, lr_frame.shape[1] * s):
        raise DataError(f"input {z.shape} is not scale {s} times the LR frame {lr_frame.shape}")


def loss_and_gradient(
    net: PriorNetwork, z, lr_frame, model: DegradationModel, weights: RegularizerWeights
) -> tuple[float, np.ndarray]:
    """Loss value and its gradient with respect to the flat parameter vector."""
    z, lr_frame = np.asarray(z), np.asarray(lr_frame)
    _check_pair(z, lr_frame, model)
    net.config.check_shape(*z.shape)
    dtype = net.config.torch_dtype
    op = DegradationOp(z.shape, model, dtype)
    net.zero_grad(set_to_none=True)
    loss, _ = objective(net(to_tensor(z, dtype)), to_tensor(lr_frame, dtype), op, weights)
    loss.backward()
    grad = torch.cat([p.grad.reshape(-1) for p in net.parameters()]).numpy().copy()
    net.zero_grad(set_to_none=True)
    return float(loss.detach()), grad


def save_checkpoint(net: PriorNetwork, path, frame_index: int = 0) -> None:
    """Little-endian float32 parameters behind a ``DUPW`` header."""
    theta = net.export_params().astype("<f4")
    header = _HEADER.pack(CHECKPOINT_MAGIC, net.config.architecture_hash(), theta.size, int(frame_index))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + theta.tobytes())


def read_checkpoint(path) -> tuple[bytes, int, np.ndarray]:
    """Return (config hash, frame index, float32 parameters)."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DataError(f"{path}: truncated checkpoint header")
    magic, digest, count, frame_index = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a DUPW checkpoint")
    payload = data[_HEADER.size :]
    if len(payload) != 4 * count:
        raise DataError(f"{path}: expected {count} parameters, found {len(payload) // 4}")
    return digest, frame_index, np.frombuffer(payload, dtype="<f4").copy()


def load_checkpoint(net: PriorNetwork, path) -> int:
    """Load parameters into ``net``; returns the stored frame index."""
    digest, frame_index, theta = read_checkpoint(path)
    if digest != net.config.architecture_hash():
        raise DataError(f"{path}: checkpoint was written for a different network architecture")
    net.import_params(theta)
    return frame_index
