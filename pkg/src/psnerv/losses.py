"""Training objective: L1 + (1 - SSIM) + total variation, with analytic gradients.

All functions accept a single image ``(C, H, W)`` or a batch ``(B, C, H, W)``.
SSIM uses a separable Gaussian window applied as two small matrix products,
so its adjoint is just the transposed products.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, DimensionError

C1 = 0.01 ** 2
C2 = 0.03 ** 2


def gaussian_window(size=11, sigma=1.5):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


@lru_cache(maxsize=64)
def _filter_matrix(n, size, sigma):
    g = gaussian_window(size, sigma)
    m = np.zeros((n - size + 1, n))
    for i in range(n - size + 1):
        m[i, i:i + size] = g
    m.setflags(write=False)
    return m


def _as_batch(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"expected (C, H, W) or (B, C, H, W), got shape {x.shape}")


class _Filter:
    """Valid-mode separable Gaussian filter over the last two axes."""

    def __init__(self, h, w, size, sigma, dtype):
        if h < size or w < size:
            raise ConfigurationError(
                f"SSIM window {size}x{size} does not fit {h}x{w} images; use a smaller win_size"
            )
        self.mh = _filter_matrix(h, size, sigma).astype(dtype)
        self.mw = _filter_matrix(w, size, sigma).astype(dtype)

    def __call__(self, x):
        return self.mh @ x @ self.mw.T

    def adjoint(self, g):
        return self.mh.T @ g @ self.mw


def _moments(a, b, filt):
    mu_a, mu_b = filt(a), filt(b)
    e_aa, e_bb, e_ab = filt(a * a), filt(b * b), filt(a * b)
    return mu_a, mu_b, e_aa - mu_a * mu_a, e_bb - mu_b * mu_b, e_ab - mu_a * mu_b


def ssim_maps(a, b, win_size=11, sigma=1.5):
    """Local SSIM and contrast-structure maps, each ``(B, C, H-w+1, W-w+1)``."""
    a, _ = _as_batch(a)
    b, _ = _as_batch(b)
    if a.shape != b.shape:
        raise DimensionError(f"ssim: shapes differ {a.shape} vs {b.shape}")
    filt = _Filter(a.shape[-2], a.shape[-1], win_size, sigma, np.result_type(a.dtype, np.float32))
    mu_a, mu_b, var_a, var_b, cov = _moments(a, b, filt)
    cs = (2.0 * cov + C2) / (var_a + var_b + C2)
    lum = (2.0 * mu_a * mu_b + C1) / (mu_a * mu_a + mu_b * mu_b + C1)
    return lum * cs, cs


def ssim(a, b, win_size=11, sigma=1.5):
    """Mean SSIM over channels and window positions (unit dynamic range).

    Returns a float for a single image pair, or a ``(B,)`` array for batches.
    """
    single = np.asarray(a).ndim == 3
    s_map, _ = ssim_maps(a, b, win_size, sigma)
    vals = s_map.mean(axis=(1, 2, 3))
    return float(vals[0]) if single else vals


def ssim_and_grad(a, b, win_size=11, sigma=1.5):
    """Per-sample SSIM ``(B,)`` and its gradient with respect to ``a``."""
    a, single = _as_batch(a)
    b, _ = _as_batch(b)
    if a.shape != b.shape:
        raise DimensionError(f"ssim: shapes differ {a.shape} vs {b.shape}")
    filt = _Filter(a.shape[-2], a.shape[-1], win_size, sigma, np.result_type(a.dtype, np.float32))
    mu_a, mu_b, var_a, var_b, cov = _moments(a, b, filt)
    a1 = 2.0 * mu_a * mu_b + C1
    a2 = 2.0 * cov + C2
    b1 = mu_a * mu_a + mu_b * mu_b + C1
    b2 = var_a + var_b + C2
    s = (a1 * a2) / (b1 * b2)
    n = s[0].size
    vals = s.mean(axis=(1, 2, 3))

    # derivatives w.r.t. the filtered first/second moments of a
    d_mu = s * (2 * mu_b / a1 - 2 * mu_a / b1 - 2 * mu_b / a2 + 2 * mu_a / b2) / n
    d_eaa = -s / b2 / n
    d_eab = 2 * s / a2 / n
    grad = filt.adjoint(d_mu) + 2 * a * filt.adjoint(d_eaa) + b * filt.adjoint(d_eab)
    if single:
        return vals[:1], grad[0]
    return vals, grad


def tv(p):
    """Anisotropic L1 total variation: mean |horizontal diff| + mean |vertical diff|."""
    x, single = _as_batch(p)
    vals = tv_and_grad(x)[0]
    return float(vals[0]) if single else vals


def tv_and_grad(p):
    x, single = _as_batch(p)
    dh = x[..., :, 1:] - x[..., :, :-1]
    dv = x[..., 1:, :] - x[..., :-1, :]
    nh = dh[0].size
    nv = dv[0].size
    vals = np.zeros(x.shape[0], dtype=np.float64)
    grad = np.zeros_like(x)
    if nh:
        vals = vals + np.abs(dh).mean(axis=(1, 2, 3))
        sh = np.sign(dh) / nh
        grad[..., :, 1:] += sh
        grad[..., :, :-1] -= sh
    if nv:
        vals = vals + np.abs(dv).mean(axis=(1, 2, 3))
        sv = np.sign(dv) / nv
        grad[..., 1:, :] += sv
        grad[..., :-1, :] -= sv
    if single:
        return vals[:1], grad[0]
    return vals, grad


def loss_and_grad(pred, target, alpha=0.7, tv_weight=1e-3, win_size=11):
    """Batch-mean objective and its gradient with respect to ``pred``.

    Per sample: ``alpha * mean|pred - target| + (1 - alpha) * (1 - ssim) + tv_weight * tv(pred)``.
    """
    p, single = _as_batch(pred)
    t, _ = _as_batch(target)
    if p.shape != t.shape:
        raise DimensionError(f"loss: pred shape {p.shape} != target shape {t.shape}")
    B = p.shape[0]
    n = p[0].size
    diff = p - t
    l1 = np.abs(diff).mean(axis=(1, 2, 3))
    s, ds = ssim_and_grad(p, t, win_size)
    per_sample = alpha * l1 + (1.0 - alpha) * (1.0 - s)
    grad = alpha * np.sign(diff) / n - (1.0 - alpha) * ds
    if tv_weight:
        tvv, dtv = tv_and_grad(p)
        per_sample = per_sample + tv_weight * tvv
        grad = grad + tv_weight * dtv
    grad = (grad / B).astype(p.dtype, copy=False)
    if single:
        grad = grad[0]
    return float(per_sample.mean()), grad


def loss(pred, target, cfg):
    """Objective value for a :class:`~psnerv.training.TrainConfig`."""
    return loss_and_grad(pred, target, cfg.alpha, cfg.tv_weight, cfg.ssim_window)[0]
