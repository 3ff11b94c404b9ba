"""Variational reference for choosing regularization weights.

Minimizes the same objective the network is trained on, but directly over
the HR pixels with L-BFGS (no network), for a grid of (lambda1, lambda2) and
noise levels on the frozen phantom. This bounds what any estimator driven by
that objective can reach and is how the desk weights were chosen.
"""

import argparse
import itertools

import numpy as np
from scipy.optimize import minimize

from dup.degradation import (
    DegradationModel,
    add_noise,
    adjoint_downsample,
    bicubic_upsample,
    downsample,
    frame_noise_seed,
    generate_phantom,
)
from dup.metrics import psnr, ssim
from dup.regularizers import ho_gradient, ho_value, tv_gradient, tv_value


def solve(lr: np.ndarray, model: DegradationModel, l1: float, l2: float, eps: float, x0: np.ndarray) -> np.ndarray:
    shape = x0.shape

    def f(v):
        x = v.reshape(shape)
        r = downsample(x, model, clamp=False) - lr
        value = 0.5 * (r * r).sum() + l1 * tv_value(x, eps) + l2 * ho_value(x)
        grad = adjoint_downsample(r, model) + l1 * tv_gradient(x, eps) + l2 * ho_gradient(x)
        return value, grad.ravel()

    res = minimize(f, x0.ravel(), jac=True, method="L-BFGS-B", options=dict(maxiter=2000))
    return np.clip(res.x.reshape(shape), 0.0, 1.0)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--frame", type=int, default=1)
    p.add_argument("--lambda1", default="0,0.001,0.002,0.003,0.01")
    p.add_argument("--lambda2", default="0,0.01,0.02,0.03,0.05")
    p.add_argument("--noise-stds", default="0.01,0.05,0.1")
    p.add_argument("--eps", type=float, default=1e-3, help="Charbonnier smoothing for L-BFGS")
    args = p.parse_args()

    hr = generate_phantom(96, 96, args.frame, seed=args.seed)[args.frame - 1]
    model = DegradationModel(scale=4)
    print("noise_std,lambda1,lambda2,psnr_db,ssim,bicubic_psnr_db,bicubic_ssim")
    for std in (float(v) for v in args.noise_stds.split(",")):
        lr = add_noise(downsample(hr, model), std, frame_noise_seed(args.seed, args.frame))
        bic = bicubic_upsample(lr, 4)
        for l1, l2 in itertools.product(map(float, args.lambda1.split(",")), map(float, args.lambda2.split(","))):
            x = solve(lr, model, l1, l2, args.eps, bic)
            print(f"{std:g},{l1:g},{l2:g},{psnr(hr, x):.3f},{ssim(hr, x):.4f},{psnr(hr, bic):.3f},{ssim(hr, bic):.4f}", flush=True)


if __name__ == "__main__":
    main()
