"""Global magnitude pruning and per-tensor affine quantization."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, DataError
from ..model import ModelParams
from ..numerics import Parameter


def is_prunable(name):
    """Conv/linear weights are pruned; biases and the style layer are not."""
    return name.endswith("weight") and not name.startswith("style.")


@dataclass
class PruneMask:
    keep: dict  # name -> bool array, False where pruned
    sparsity: float
    n_pruned: int
    n_prunable: int

    def as_float(self, dtype=np.float32):
        return {n: m.astype(dtype) for n, m in self.keep.items()}


def prune_global(params, sparsity):
    """Zero the ``floor(sparsity * P)`` smallest-magnitude prunable weights.

    ``P`` is the number of prunable scalars. Ties in magnitude are broken by
    ``(tensor name, flat index)``. Returns ``(pruned copy, PruneMask)``.
    """
    if not 0 <= sparsity < 1:
        raise ConfigurationError(f"sparsity must be in [0, 1), got {sparsity}")
    names = sorted(p.name for p in params if is_prunable(p.name))
    flat = [np.abs(params[n].value.astype(np.float64).ravel()) for n in names]
    sizes = [f.size for f in flat]
    total = int(sum(sizes))
    k = int(math.floor(sparsity * total))
    pruned = params.copy()
    keep_all = np.ones(total, dtype=bool)
    if k > 0:
        mags = np.concatenate(flat)
        # stable sort: equal magnitudes keep concatenation order = (name, index)
        keep_all[np.argsort(mags, kind="stable")[:k]] = False
    keep = {}
    off = 0
    for n, sz in zip(names, sizes):
        m = keep_all[off:off + sz].reshape(params[n].shape)
        keep[n] = m
        pruned[n].value[~m] = 0
        off += sz
    return pruned, PruneMask(keep, sparsity, k, total)


@dataclass
class QuantTensor:
    bits: int
    theta_min: float
    scale: float
    codes: np.ndarray
    shape: tuple

    def __post_init__(self):
        self.shape = tuple(self.shape)


def quantize(t, bits):
    """Affine map onto ``[0, 2^bits - 1]``: ``code = round_half_even((t - min) / scale)``."""
    if not (isinstance(bits, (int, np.integer)) and 1 <= bits <= 16):
        raise ConfigurationError(f"bits must be an integer in [1, 16], got {bits}")
    t = np.asarray(t)
    v = t.astype(np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise DataError("cannot quantize a tensor with non-finite values")
    levels = (1 << bits) - 1
    if v.size == 0:
        return QuantTensor(bits, 0.0, 0.0, np.zeros(0, dtype=np.int64), t.shape)
    lo, hi = float(v.min()), float(v.max())
    scale = (hi - lo) / levels if hi > lo else 0.0
    if scale == 0.0:
        codes = np.zeros(v.size, dtype=np.int64)
    else:
        codes = np.clip(np.rint((v - lo) / scale), 0, levels).astype(np.int64)
    return QuantTensor(int(bits), lo, scale, codes, t.shape)


def dequantize(q, dtype=np.float32):
    """``theta_min + code * scale``, reshaped to the original tensor shape."""
    vals = q.theta_min + q.codes.astype(np.float64) * q.scale
    return vals.reshape(q.shape).astype(dtype)


def quantize_params(params, bits):
    return {p.name: quantize(p.value, bits) for p in params}


def dequantize_params(qtensors, dtype=np.float32):
    return ModelParams(Parameter(n, dequantize(q, dtype)) for n, q in qtensors.items())


def prune_quantize(params, bits, sparsity=0.0):
    """Reference pipeline: ``dequantize(quantize(prune(params)))``."""
    pruned, _ = prune_global(params, sparsity)
    return dequantize_params(quantize_params(pruned, bits), params.dtype)
