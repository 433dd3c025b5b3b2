"""Coordinate normalization and sinusoidal positional encoding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, ConfigurationError


@dataclass(frozen=True)
class CoordPair:
    t_norm: float
    i_norm: float

    def __post_init__(self):
        for name in ("t_norm", "i_norm"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise BoundsError(f"{name}={v} outside (0, 1]")


@dataclass(frozen=True)
class EncodingConfig:
    b: float = 1.25
    l: int = 80

    def __post_init__(self):
        if not self.b > 1:
            raise ConfigurationError(f"encoding base b must be > 1, got {self.b}")
        if int(self.l) != self.l or self.l < 1:
            raise ConfigurationError(f"encoding levels l must be a positive integer, got {self.l}")

    @property
    def dim(self):
        return 4 * int(self.l)


def normalize(frame_index, n_frames, patch_index, n_patches):
    """Map 0-based ``(frame, patch)`` indices onto ``(0, 1]`` as ``(k + 1) / count``."""
    if not 0 <= frame_index < n_frames:
        raise BoundsError(f"frame_index {frame_index} out of range for {n_frames} frames")
    if not 0 <= patch_index < n_patches:
        raise BoundsError(f"patch_index {patch_index} out of range for {n_patches} patches")
    return CoordPair((frame_index + 1) / n_frames, (patch_index + 1) / n_patches)


def _frequencies(cfg):
    # b**79 ~ 4.6e7 at the defaults, so stay in float64 until the end.
    return np.pi * np.float64(cfg.b) ** np.arange(cfg.l, dtype=np.float64)


def encode_scalar(values, cfg):
    """Interleaved ``(sin(b^k pi v), cos(b^k pi v))`` for ``k < l``; shape ``(..., 2l)``."""
    v = np.asarray(values, dtype=np.float64)[..., None] * _frequencies(cfg)
    out = np.empty(v.shape[:-1] + (2 * cfg.l,), dtype=np.float64)
    out[..., 0::2] = np.sin(v)
    out[..., 1::2] = np.cos(v)
    return out


def encode(c, cfg, dtype=np.float32):
    """Length-``4l`` encoding: all time terms followed by all patch terms."""
    return np.concatenate([encode_scalar(c.t_norm, cfg), encode_scalar(c.i_norm, cfg)]).astype(dtype)


def encode_batch(t_norm, i_norm, cfg, dtype=np.float32):
    """Vectorized :func:`encode` over arrays of normalized coordinates; shape ``(B, 4l)``."""
    return np.concatenate(
        [encode_scalar(t_norm, cfg), encode_scalar(i_norm, cfg)], axis=-1
    ).astype(dtype)


def encode_indices(frame_idx, patch_idx, n_frames, n_patches, cfg, dtype=np.float32):
    """Encode integer index arrays directly (bounds-checked)."""
    frame_idx = np.asarray(frame_idx)
    patch_idx = np.asarray(patch_idx)
    if frame_idx.size and (frame_idx.min() < 0 or frame_idx.max() >= n_frames):
        raise BoundsError(f"frame indices out of range for {n_frames} frames")
    if patch_idx.size and (patch_idx.min() < 0 or patch_idx.max() >= n_patches):
        raise BoundsError(f"patch indices out of range for {n_patches} patches")
    return encode_batch((frame_idx + 1) / n_frames, (patch_idx + 1) / n_patches, cfg, dtype)
