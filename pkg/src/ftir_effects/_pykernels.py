"""Pure-numpy versions of the hot kernels; same signatures as ``_ckernels``."""

import numpy as np

_CHUNK = 1 << 22  # elements per temporary block in the landscape scan


def align_rows(X, T):
    """Least-squares ``c, d`` minimising ``||c X[i] + d - T[i]||`` for every row.

    ``T`` is either one target shared by all rows or one target per row.
    Returns ``(c, d, sxx)`` where ``sxx`` is the centered sum of squares of
    each row (zero for a constant row, in which case ``c = d = 0``).
    """
    X = np.ascontiguousarray(X, dtype=float)
    T = np.ascontiguousarray(T, dtype=float)
    xm = X.mean(axis=1)
    Xc = X - xm[:, None]
    if T.ndim == 1:
        tm = np.full(X.shape[0], T.mean())
        sxt = Xc @ (T - T.mean())
    else:
        tm = T.mean(axis=1)
        sxt = np.einsum("ij,ij->i", Xc, T - tm[:, None])
    sxx = np.einsum("ij,ij->i", Xc, Xc)
    ok = sxx > 0
    c = np.where(ok, sxt / np.where(ok, sxx, 1.0), 0.0)
    d = np.where(ok, tm - c * xm, 0.0)
    return c, d, sxx


def l1_pairs(gt, x0, thetas, phis):
    """``||gt cos(phi) + (cos(theta)/sqrt(p) + x0 sin(theta)) sin(phi)||_1`` per angle pair."""
    gt = np.asarray(gt, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    inv_sqrt_p = 1.0 / np.sqrt(gt.size)
    cp, sp = np.cos(phis), np.sin(phis)
    a = sp * np.cos(thetas) * inv_sqrt_p
    b = sp * np.sin(thetas)
    out = np.empty(thetas.size)
    step = max(1, _CHUNK // gt.size)
    for s in range(0, out.size, step):
        sl = slice(s, s + step)
        g = cp[sl, None] * gt + b[sl, None] * x0 + a[sl, None]
        out[sl] = np.abs(g).sum(axis=1)
    return out


def l1_grid(gt, x0, cos_t, sin_t, cos_p, sin_p):
    """Landscape ``G[i, j]`` at ``theta_i, phi_j`` given precomputed sines and cosines."""
    gt = np.asarray(gt, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    inv_sqrt_p = 1.0 / np.sqrt(gt.size)
    cos_p = np.asarray(cos_p, dtype=float)
    sin_p = np.asarray(sin_p, dtype=float)
    out = np.empty((len(cos_t), len(cos_p)))
    # rows over phi share one direction w_theta = cos(theta)/sqrt(p) + sin(theta) x0
    base = cos_p[:, None] * gt
    for i, (ct, st) in enumerate(zip(cos_t, sin_t)):
        w = st * x0 + ct * inv_sqrt_p
        out[i] = np.abs(base + sin_p[:, None] * w).sum(axis=1)
    return out
