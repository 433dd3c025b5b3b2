"""Quality and rate metrics: PSNR, SSIM, MS-SSIM, bits per pixel."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError
from .losses import ssim, ssim_maps

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

__all__ = ["psnr", "ssim", "ms_ssim", "bpp", "QualityReport", "quality_report"]


def psnr(a, b):
    """``10 log10(1 / MSE)`` for [0, 1] images; ``inf`` when identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"psnr: shapes differ {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


def _pool2(x):
    h, w = x.shape[-2] // 2 * 2, x.shape[-1] // 2 * 2
    x = x[..., :h, :w]
    return 0.25 * (x[..., 0::2, 0::2] + x[..., 1::2, 0::2] + x[..., 0::2, 1::2] + x[..., 1::2, 1::2])


def ms_ssim(a, b, scales=None, weights=MS_SSIM_WEIGHTS, win_size=11):
    """Multi-scale SSIM of two ``(C, H, W)`` images.

    Scales are separated by 2x2 mean pooling. With ``scales=None`` the scale
    count is reduced to what the image size allows and the remaining weights
    are renormalized to sum to 1; asking for more scales than fit raises. Negative
    contrast-structure terms are clamped to 0 before exponentiation, and the
    result is the channel average.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"ms_ssim: shapes differ {a.shape} vs {b.shape}")
    if a.ndim != 3:
        raise DimensionError(f"ms_ssim: expected (C, H, W), got {a.shape}")
    smallest = min(a.shape[-2:])
    fit = 0
    while fit < len(weights) and smallest // (2 ** fit) >= win_size:
        fit += 1
    if scales is None:
        scales = fit
        if scales == 0:
            raise ConfigurationError(f"ms_ssim: image {a.shape[-2:]} smaller than the {win_size}px window")
    elif scales > fit:
        need = win_size * 2 ** (scales - 1)
        raise ConfigurationError(
            f"ms_ssim: {scales} scales need a minimum side of {need}px, got {smallest}px; "
            "pass scales=None to reduce the scale count"
        )
    w = np.asarray(weights[:scales], dtype=np.float64)
    if scales < len(weights):
        w = w / w.sum()

    per_channel = np.ones(a.shape[0])
    x, y = a[None], b[None]
    for j in range(scales):
        s_map, cs_map = ssim_maps(x, y, win_size)
        term = (s_map if j == scales - 1 else cs_map).mean(axis=(2, 3))[0]
        per_channel *= np.maximum(term, 0.0) ** w[j]
        if j < scales - 1:
            x, y = _pool2(x), _pool2(y)
    return float(per_channel.mean())


def bpp(model_file_bytes, n_frames, height, width):
    """Bits per pixel of a model file over a ``T x H x W`` video."""
    if min(model_file_bytes, n_frames, height, width) <= 0:
        raise ConfigurationError("bpp: all arguments must be positive")
    return 8.0 * model_file_bytes / (n_frames * height * width)


def _json_float(v):
    return "inf" if v == math.inf else v


@dataclass
class QualityReport:
    psnr_per_frame: list
    ms_ssim_per_frame: list = field(default_factory=list)
    bpp: float | None = None

    @property
    def frames(self):
        return len(self.psnr_per_frame)

    @property
    def psnr_mean(self):
        return float(np.mean(self.psnr_per_frame))

    @property
    def ms_ssim_mean(self):
        return float(np.mean(self.ms_ssim_per_frame)) if self.ms_ssim_per_frame else None

    def to_dict(self):
        d = {
            "frames": self.frames,
            "psnr_per_frame": [_json_float(v) for v in self.psnr_per_frame],
            "psnr_mean": _json_float(self.psnr_mean),
            "ms_ssim_mean": self.ms_ssim_mean,
        }
        if self.bpp is not None:
            d["bpp"] = self.bpp
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self):
        rows = ["frame,psnr,ms_ssim"]
        for i, p in enumerate(self.psnr_per_frame):
            m = self.ms_ssim_per_frame[i] if i < len(self.ms_ssim_per_frame) else ""
            rows.append(f"{i},{_json_float(p)},{m}")
        return "\n".join(rows) + "\n"


def quality_report(ref, test, model_file_bytes=None):
    """Per-frame PSNR and MS-SSIM between two ``(T, 3, H, W)`` videos."""
    ref = np.asarray(ref)
    test = np.asarray(test)
    if ref.shape != test.shape:
        raise DimensionError(f"videos differ in shape: {ref.shape} vs {test.shape}")
    ps = [psnr(r, t) for r, t in zip(ref, test)]
    ms = [ms_ssim(r, t) for r, t in zip(ref, test)]
    rate = None
    if model_file_bytes is not None:
        T, _, H, W = ref.shape
        rate = bpp(model_file_bytes, T, H, W)
    return QualityReport(ps, ms, rate)
