"""Independent reference implementations shared by the unit and acceptance tests.

Each one is written from the defining formula with plain loops or dense
matrices and does not call the code path it checks.
"""

import math

import numpy as np

from dup.degradation import downsample
from dup.prior_net import export_params, import_params, loss_and_gradient

SCALE_A = [(2, 2), (2, 3), (4, 2), (4, 3)]


def sinc(x):
    return 1.0 if x == 0 else math.sin(math.pi * x) / (math.pi * x)


def lanczos_scalar(x, a):
    return sinc(x) * sinc(x / a) if abs(x) < a else 0.0


def cubic_scalar(x, a=-0.5):
    x = abs(x)
    if x <= 1:
        return (a + 2) * x**3 - (a + 3) * x**2 + 1
    if x < 2:
        return a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a
    return 0.0


def dense_operator(shape, model):
    """Assemble the degradation as a dense matrix by probing basis vectors."""
    h, w = shape
    cols = []
    for k in range(h * w):
        e = np.zeros(h * w)
        e[k] = 1.0
        cols.append(downsample(e.reshape(h, w), model, clamp=False).ravel())
    return np.stack(cols, axis=1)


def direct_downsample(x, scale, a):
    """Loop form: pixel-centred Lanczos weights, clamped indices, per-axis normalisation."""
    h, w = x.shape

    def weights(n, i):
        c = (i + 0.5) * scale - 0.5
        taps = {}
        for p in range(int(math.floor(c - a * scale)) - 1, int(math.ceil(c + a * scale)) + 2):
            wt = lanczos_scalar((p - c) / scale, a)
            if wt:
                q = min(max(p, 0), n - 1)
                taps[q] = taps.get(q, 0.0) + wt
        total = sum(taps.values())
        return {q: v / total for q, v in taps.items()}

    out = np.zeros((h // scale, w // scale))
    for i in range(h // scale):
        wr = weights(h, i)
        for j in range(w // scale):
            wc = weights(w, j)
            out[i, j] = sum(vr * vc * x[p, q] for p, vr in wr.items() for q, vc in wc.items())
    return out


def direct_interp_1d(f, scale, kernel, support):
    n = len(f)
    out = []
    for j in range(n * scale):
        x = (j + 0.5) / scale - 0.5
        base = math.floor(x)
        num = den = 0.0
        for k in range(base - support + 1, base + support + 1):
            wt = kernel(x - k)
            num += wt * f[min(max(k, 0), n - 1)]
            den += wt
        out.append(num / den)
    return np.array(out)


def direct_ssim(x, y, size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Window-by-window evaluation of the SSIM formula."""
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sigma**2))
    g /= g.sum()
    c1, c2 = k1**2, k2**2
    vals = []
    for i in range(x.shape[0] - size + 1):
        for j in range(x.shape[1] - size + 1):
            a, b = x[i : i + size, j : j + size], y[i : i + size, j : j + size]
            ma, mb = (g * a).sum(), (g * b).sum()
            va = (g * (a - ma) ** 2).sum()
            vb = (g * (b - mb) ** 2).sum()
            cov = (g * (a - ma) * (b - mb)).sum()
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def difference_matrix(n):
    """Forward difference with a zero last row, as a dense (n, n) matrix."""
    d = np.zeros((n, n))
    for i in range(n - 1):
        d[i, i], d[i, i + 1] = -1.0, 1.0
    return d


def central_differences(f, x, step=1e-4):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += step
        xm[idx] -= step
        g[idx] = (f(xp) - f(xm)) / (2 * step)
    return g


def finite_difference_check(net, z, lr, model, weights, coords, step=1e-6):
    theta = export_params(net)
    _, grad = loss_and_gradient(net, z, lr, model, weights)
    fd = np.empty(len(coords))
    for k, i in enumerate(coords):
        plus, minus = theta.copy(), theta.copy()
        plus[i] += step
        minus[i] -= step
        import_params(net, plus)
        f_plus, _ = loss_and_gradient(net, z, lr, model, weights)
        import_params(net, minus)
        f_minus, _ = loss_and_gradient(net, z, lr, model, weights)
        fd[k] = (f_plus - f_minus) / (2 * step)
    import_params(net, theta)
    return grad[coords], fd
