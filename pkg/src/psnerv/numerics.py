"""Forward/backward kernels for the fixed PS-NeRV computation graph.

Arrays are plain ``numpy.ndarray`` objects in NCHW layout; the spatial ops also
accept ``channels_last=True`` for NHWC, which the model uses internally because
it makes the 3x3 im2col copies contiguous. Every op takes an
optional :class:`Tape`; when one is given, the op records a closure that maps
the gradient of its output to gradients of its inputs. :func:`backward` then
replays the tape in reverse.

float32 is the working precision. Passing float64 arrays runs every op in
float64, which is what the finite-difference checks use.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy import special

from .errors import ConfigurationError, DimensionError, UsageError

DEFAULT_DTYPE = np.float32


@dataclass
class Parameter:
    """A named learnable tensor and its gradient buffer."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise DimensionError(
                f"grad shape {self.grad.shape} != value shape {self.value.shape} for {self.name!r}"
            )

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return int(self.value.size)


class Tape:
    """Record of a forward pass, consumed by :func:`backward`."""

    def __init__(self):
        self._nodes = []

    def record(self, out, inputs, backward_fn):
        """Register ``out = f(*inputs)`` with ``backward_fn(dout) -> tuple of input grads``."""
        self._nodes.append((out, tuple(inputs), backward_fn))
        return out

    def __len__(self):
        return len(self._nodes)


class Gradients:
    """Gradient lookup keyed by the array objects seen during the forward pass."""

    def __init__(self, grads, arrays):
        self._grads = grads
        self._arrays = arrays

    def __getitem__(self, array):
        g = self._grads.get(id(array))
        if g is None:
            return np.zeros_like(array)
        return g

    def __contains__(self, array):
        return id(array) in self._grads


def backward(tape, out, out_grad):
    """Reverse-mode sweep over ``tape`` starting from ``out`` with seed ``out_grad``."""
    if tape is None or len(tape) == 0:
        raise UsageError("backward called before any forward pass was recorded")
    out_grad = np.asarray(out_grad)
    if out_grad.shape != np.shape(out):
        raise DimensionError(f"out_grad shape {out_grad.shape} != output shape {np.shape(out)}")
    if not any(node[0] is out for node in tape._nodes):
        raise UsageError("output was not produced by a recorded forward pass")

    grads = {id(out): out_grad}
    arrays = {id(out): out}
    for node_out, inputs, fn in reversed(tape._nodes):
        g = grads.get(id(node_out))
        if g is None:
            continue
        in_grads = fn(g)
        for x, gx in zip(inputs, in_grads):
            if x is None or gx is None:
                continue
            key = id(x)
            arrays[key] = x
            if key in grads:
                grads[key] = grads[key] + gx
            else:
                grads[key] = gx
    return Gradients(grads, arrays)


def _maybe_record(tape, out, inputs, fn):
    if tape is not None:
        tape.record(out, inputs, fn)
    return out


# -- dense ops ---------------------------------------------------------------

def linear(x, w, bias, tape=None):
    """``y[b, o] = sum_k x[b, k] * w[o, k] + bias[o]``."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"linear: input shape {x.shape} incompatible with weight shape {w.shape}")
    if bias.shape != (w.shape[0],):
        raise DimensionError(f"linear: bias shape {bias.shape} does not match weight shape {w.shape}")
    y = x @ w.T + bias

    def grad(dy):
        return dy @ w, dy.T @ x, dy.sum(axis=0)

    return _maybe_record(tape, y, (x, w, bias), grad)


def _conv_rows(x):
    """Zero-pad ``(B, H, W, C)`` by one and stack the three horizontal shifts.

    Returns ``(B, (H+2)*W, 3*C)`` where row ``h*W + w`` holds
    ``[xp[h, w], xp[h, w+1], xp[h, w+2]]``. The vertical taps are then plain
    row offsets of ``W``, so no 9x im2col copy is needed.
    """
    B, H, W, C = x.shape
    xp = np.zeros((B, H + 2, W + 2, C), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x
    s = xp.strides
    win = as_strided(xp, (B, H + 2, W, 3, C), (s[0], s[1], s[2], s[2], s[3]), writeable=False)
    return win.reshape(B, (H + 2) * W, 3 * C)


def _conv_nhwc(x, k, bias):
    B, H, W, C = x.shape
    O = k.shape[0]
    rows = _conv_rows(x)
    km = k.transpose(2, 3, 1, 0).reshape(3, 3 * C, O)  # km[u] rows ordered (v, c)
    n = H * W
    y = rows[:, :n] @ km[0]
    y += rows[:, W:W + n] @ km[1]
    y += rows[:, 2 * W:2 * W + n] @ km[2]
    y += bias
    return y.reshape(B, H, W, O), rows, km


def _conv_nhwc_grad(dy, rows, km, shape):
    B, H, W, C = shape
    O = km.shape[2]
    n = H * W
    dy3 = dy.reshape(B, n, O)
    dkm = np.empty_like(km)
    drows = np.zeros_like(rows)
    for u in range(3):
        r = rows[:, u * W:u * W + n]
        dkm[u] = np.matmul(r.transpose(0, 2, 1), dy3).sum(axis=0)
        drows[:, u * W:u * W + n] += dy3 @ km[u].T
    d4 = drows.reshape(B, H + 2, W, 3, C)
    dxp = np.zeros((B, H + 2, W + 2, C), dtype=dy.dtype)
    for v in range(3):
        dxp[:, :, v:v + W] += d4[:, :, :, v]
    dk = dkm.reshape(3, 3, C, O).transpose(3, 2, 0, 1)
    return dxp[:, 1:-1, 1:-1], np.ascontiguousarray(dk)


def conv2d(x, k, bias, tape=None, channels_last=False):
    """3x3 cross-correlation, stride 1, zero padding 1.

    ``x`` is ``(B, C, H, W)``, or ``(B, H, W, C)`` with ``channels_last``;
    ``k`` is always ``(O, C, 3, 3)``.
    """
    if x.ndim != 4 or k.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-d input and kernel, got {x.shape} and {k.shape}")
    if k.shape[2:] != (3, 3):
        raise ConfigurationError(f"conv2d: kernel spatial size must be 3x3, got {k.shape[2:]}")
    c_in = x.shape[3] if channels_last else x.shape[1]
    if c_in != k.shape[1]:
        raise DimensionError(f"conv2d: input channels {c_in} (shape {x.shape}) != kernel channels {k.shape[1]} (shape {k.shape})")
    if bias.shape != (k.shape[0],):
        raise DimensionError(f"conv2d: bias shape {bias.shape} does not match kernel shape {k.shape}")
    xh = x if channels_last else x.transpose(0, 2, 3, 1)
    yh, rows, km = _conv_nhwc(xh, k, bias)
    y = yh if channels_last else np.ascontiguousarray(yh.transpose(0, 3, 1, 2))
    O = k.shape[0]

    def grad(dy):
        dyh = dy if channels_last else dy.transpose(0, 2, 3, 1)
        dyh = np.ascontiguousarray(dyh)
        dxh, dk = _conv_nhwc_grad(dyh, rows, km, xh.shape)
        dx = np.ascontiguousarray(dxh if channels_last else dxh.transpose(0, 3, 1, 2))
        return dx, dk, dyh.reshape(-1, O).sum(axis=0)

    return _maybe_record(tape, y, (x, k, bias), grad)


def pixel_shuffle(x, scale, tape=None, channels_last=False):
    """Rearrange ``(B, C*S*S, H, W)`` into ``(B, C, H*S, W*S)``.

    ``out[b, c, h*S + u, w*S + v] = in[b, c*S*S + u*S + v, h, w]``.
    """
    s = int(scale)
    cs2 = x.shape[3] if channels_last else x.shape[1]
    if s < 1 or cs2 % (s * s):
        raise ConfigurationError(f"pixel_shuffle: {cs2} channels not divisible by upscale^2 = {s * s}")
    c = cs2 // (s * s)
    if channels_last:
        b, h, w, _ = x.shape
        y = x.reshape(b, h, w, c, s, s).transpose(0, 1, 4, 2, 5, 3).reshape(b, h * s, w * s, c)
    else:
        b, _, h, w = x.shape
        y = x.reshape(b, c, s, s, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(b, c, h * s, w * s)

    def grad(dy):
        return (pixel_unshuffle(dy, s, channels_last=channels_last),)

    return _maybe_record(tape, y, (x,), grad)


def pixel_unshuffle(x, scale, tape=None, channels_last=False):
    """Inverse of :func:`pixel_shuffle`."""
    s = int(scale)
    if channels_last:
        b, hs, ws, c = x.shape
    else:
        b, c, hs, ws = x.shape
    if s < 1 or hs % s or ws % s:
        raise ConfigurationError(f"pixel_unshuffle: spatial size {(hs, ws)} not divisible by {s}")
    h, w = hs // s, ws // s
    if channels_last:
        y = x.reshape(b, h, s, w, s, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, h, w, c * s * s)
    else:
        y = x.reshape(b, c, h, s, w, s).transpose(0, 1, 3, 5, 2, 4).reshape(b, c * s * s, h, w)

    def grad(dy):
        return (pixel_shuffle(dy, s, channels_last=channels_last),)

    return _maybe_record(tape, y, (x,), grad)


def transpose(x, axes, tape=None):
    y = np.ascontiguousarray(x.transpose(axes))
    inv = np.argsort(axes)
    return _maybe_record(tape, y, (x,), lambda dy: (dy.transpose(inv),))


# -- elementwise -------------------------------------------------------------

_GELU_C = float(np.sqrt(2.0 / np.pi))  # a Python float keeps float32 arrays float32


def gelu(x, tape=None):
    """GELU, tanh approximation: ``0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))``."""
    inner = _GELU_C * (x + 0.044715 * x * x * x)
    th = np.tanh(inner)
    y = 0.5 * x * (1.0 + th)

    def grad(dy):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (dy * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner),)

    return _maybe_record(tape, y.astype(x.dtype, copy=False), (x,), grad)


def sigmoid(x, tape=None):
    y = special.expit(x)

    def grad(dy):
        return (dy * y * (1.0 - y),)

    return _maybe_record(tape, y, (x,), grad)


def add(a, b, tape=None):
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes differ {a.shape} vs {b.shape}")
    return _maybe_record(tape, a + b, (a, b), lambda dy: (dy, dy))


def add_const(x, c, tape=None):
    y = x + np.asarray(c, dtype=x.dtype)
    return _maybe_record(tape, y, (x,), lambda dy: (dy,))


def reshape(x, shape, tape=None):
    y = x.reshape(shape)
    return _maybe_record(tape, y, (x,), lambda dy: (dy.reshape(x.shape),))


def take_columns(x, start, stop, tape=None):
    """``x[:, start:stop]`` as a fresh array."""
    y = np.ascontiguousarray(x[:, start:stop])

    def grad(dy):
        dx = np.zeros_like(x)
        dx[:, start:stop] = dy
        return (dx,)

    return _maybe_record(tape, y, (x,), grad)


# -- statistics --------------------------------------------------------------

def channel_stats(x, channels_last=False):
    """Per-sample, per-channel spatial mean and population variance of ``(B, C, H, W)``."""
    if x.ndim != 4:
        raise DimensionError(f"channel_stats: expected a 4-d feature map, got {x.shape}")
    axes = (1, 2) if channels_last else (2, 3)
    mean = x.mean(axis=axes, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=axes)
    return mean.squeeze(axes), var
