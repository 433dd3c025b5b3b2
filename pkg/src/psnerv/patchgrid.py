"""Split frames into an N x N grid of patches and stitch them back together.

Patches are numbered row-major: patch ``p`` sits at grid row ``p // N`` and
grid column ``p % N``. Tiles do not overlap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError


@dataclass(frozen=True)
class GridConfig:
    N: int
    H: int
    W: int

    def __post_init__(self):
        if self.N < 1:
            raise ConfigurationError(f"grid side N must be >= 1, got {self.N}")
        if self.H % self.N or self.W % self.N:
            raise ConfigurationError(
                f"frame size {self.H}x{self.W} is not divisible by N={self.N}; "
                "pad the frames to a multiple of N or choose a different N"
            )

    @property
    def n_patches(self):
        return self.N * self.N

    @property
    def patch_h(self):
        return self.H // self.N

    @property
    def patch_w(self):
        return self.W // self.N

    def origin(self, p):
        """Top-left pixel ``(row, col)`` of patch ``p``."""
        return (p // self.N) * self.patch_h, (p % self.N) * self.patch_w


@dataclass
class Patch:
    pixels: np.ndarray
    t_index: int = 0
    p_index: int = 0


def split_array(frames, g):
    """``(..., C, H, W)`` -> ``(..., N*N, C, H/N, W/N)`` in row-major patch order."""
    *lead, c, h, w = frames.shape
    if (h, w) != (g.H, g.W):
        raise DimensionError(f"frame size {(h, w)} does not match grid config {(g.H, g.W)}")
    n, ph, pw = g.N, g.patch_h, g.patch_w
    x = frames.reshape(*lead, c, n, ph, n, pw)
    nd = len(lead)
    # (..., c, gy, ph, gx, pw) -> (..., gy, gx, c, ph, pw)
    order = list(range(nd)) + [nd + 1, nd + 3, nd, nd + 2, nd + 4]
    return np.ascontiguousarray(x.transpose(order)).reshape(*lead, n * n, c, ph, pw)


def stitch_array(patches, g):
    """Inverse of :func:`split_array`."""
    *lead, p, c, ph, pw = patches.shape
    if p != g.n_patches or (ph, pw) != (g.patch_h, g.patch_w):
        raise DimensionError(
            f"expected {g.n_patches} patches of {g.patch_h}x{g.patch_w}, got {p} of {ph}x{pw}"
        )
    n = g.N
    nd = len(lead)
    x = patches.reshape(*lead, n, n, c, ph, pw)
    order = list(range(nd)) + [nd + 2, nd, nd + 3, nd + 1, nd + 4]
    return np.ascontiguousarray(x.transpose(order)).reshape(*lead, c, g.H, g.W)


def split(frame, g, t_index=0):
    """Split one ``(3, H, W)`` frame into ``N*N`` :class:`Patch` objects."""
    if frame.ndim != 3:
        raise DimensionError(f"expected a (C, H, W) frame, got shape {frame.shape}")
    arr = split_array(frame, g)
    return [Patch(arr[p], t_index, p) for p in range(g.n_patches)]


def stitch(patches, g):
    """Assemble ``N*N`` patches (row-major) into a ``(3, H, W)`` frame."""
    if len(patches) != g.n_patches:
        raise DimensionError(f"expected {g.n_patches} patches, got {len(patches)}")
    pix = [p.pixels if isinstance(p, Patch) else np.asarray(p) for p in patches]
    shapes = {q.shape for q in pix}
    if len(shapes) != 1:
        raise DimensionError(f"inconsistent patch shapes: {sorted(shapes)}")
    return stitch_array(np.stack(pix), g)


def pad_to_multiple(frames, n):
    """Replicate-pad ``(..., H, W)`` up to multiples of ``n``; returns (padded, (H, W))."""
    h, w = frames.shape[-2:]
    ph = (-h) % n
    pw = (-w) % n
    if ph == 0 and pw == 0:
        return frames, (h, w)
    pad = [(0, 0)] * (frames.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(frames, pad, mode="edge"), (h, w)


def crop(frames, size):
    h, w = size
    return frames[..., :h, :w]
