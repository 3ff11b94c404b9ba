"""Forward differences with Neumann boundary, anisotropic TV and the quadratic
higher-order penalty.

The numpy functions are the reference definitions with hand-written
gradients; :func:`tv_torch` and :func:`ho_torch` are the same sums on tensors
for use inside the network loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass(frozen=True)
class RegularizerWeights:
    lambda1: float = 0.01  # TV
    lambda2: float = 0.01  # higher-order
    charbonnier_eps: float = 1e-8

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularization weights must be nonnegative")
        if self.charbonnier_eps <= 0:
            raise ValueError("charbonnier_eps must be positive")


def diff_h(frame) -> np.ndarray:
    """``I[r, c+1] - I[r, c]``; the last column is zero."""
    frame = np.asarray(frame, dtype=np.float64)
    out = np.zeros_like(frame)
    out[:, :-1] = frame[:, 1:] - frame[:, :-1]
    return out


def diff_v(frame) -> np.ndarray:
    """``I[r+1, c] - I[r, c]``; the last row is zero."""
    frame = np.asarray(frame, dtype=np.float64)
    out = np.zeros_like(frame)
    out[:-1, :] = frame[1:, :] - frame[:-1, :]
    return out


def diff_h_adjoint(g) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    out = np.zeros_like(g)
    out[:, 1:] += g[:, :-1]
    out[:, :-1] -= g[:, :-1]
    return out


def diff_v_adjoint(g) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    out = np.zeros_like(g)
    out[1:, :] += g[:-1, :]
    out[:-1, :] -= g[:-1, :]
    return out


def charbonnier(u, eps: float):
    """``sqrt(u^2 + eps^2) - eps``: zero at zero, ``|u|`` far from it."""
    return np.sqrt(u * u + eps * eps) - eps


def tv_value(frame, eps: float = 1e-8) -> float:
    return float(charbonnier(diff_h(frame), eps).sum() + charbonnier(diff_v(frame), eps).sum())


def ho_value(frame) -> float:
    return float(0.5 * ((diff_h(frame) ** 2).sum() + (diff_v(frame) ** 2).sum()))


def tv_gradient(frame, eps: float = 1e-8) -> np.ndarray:
    dh, dv = diff_h(frame), diff_v(frame)
    return diff_h_adjoint(dh / np.sqrt(dh * dh + eps * eps)) + diff_v_adjoint(dv / np.sqrt(dv * dv + eps * eps))


def ho_gradient(frame) -> np.ndarray:
    """``(Dh^T Dh + Dv^T Dv) I``, the negative Neumann Laplacian."""
    return diff_h_adjoint(diff_h(frame)) + diff_v_adjoint(diff_v(frame))


def _diffs(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    # The zero last row/column contributes nothing to either sum.
    return x[..., :, 1:] - x[..., :, :-1], x[..., 1:, :] - x[..., :-1, :]


def tv_torch(x: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    dh, dv = _diffs(x)
    return (torch.sqrt(dh * dh + eps * eps) - eps).sum() + (torch.sqrt(dv * dv + eps * eps) - eps).sum()


def ho_torch(x: torch.Tensor) -> torch.Tensor:
    dh, dv = _diffs(x)
    return 0.5 * ((dh * dh).sum() + (dv * dv).sum())
