"""PS-NeRV network: MLP stem, patch-wise stylized blocks, style MLP, RGB head.

Block ``j`` is ``conv3x3 -> pixel_shuffle(S_j) -> AdaIN -> GELU``. The AdaIN
scale and shift for every block come from one linear layer applied to the
coordinate embedding. The head is a 3x3 conv to RGB followed by a sigmoid.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import numerics as nx
from .embedding import EncodingConfig, encode, encode_indices
from .errors import ConfigurationError, DimensionError
from .numerics import Parameter

ADAIN_EPS = 1e-5


def _prime_factors(n):
    out, p = [], 2
    while p * p <= n:
        while n % p == 0:
            out.append(p)
            n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def factor_upscale(total, n_blocks=5):
    """Split ``total`` into ``n_blocks`` integer factors, largest first, padded with 1s."""
    factors = _prime_factors(total)
    while len(factors) > n_blocks:
        factors.sort()
        factors = [factors[0] * factors[1]] + factors[2:]
    factors.sort(reverse=True)
    return tuple(factors + [1] * (n_blocks - len(factors)))


def derive_upscales(patch_h, patch_w, n_blocks=5, min_base=4):
    """Pick upscale factors and base grid for a patch size.

    The total upsampling is the largest common divisor of the patch sides that
    keeps the smaller base side at least ``min_base`` pixels. For a 480x270
    patch this gives ``(5, 3, 2, 1, 1)`` on a 16x9 base.
    """
    g = math.gcd(patch_h, patch_w)
    best = 1
    for d in range(1, g + 1):
        if g % d == 0 and min(patch_h, patch_w) // d >= min_base:
            best = d
    if min(patch_h, patch_w) < min_base:
        best = 1
    ups = factor_upscale(best, n_blocks)
    return ups, patch_h // best, patch_w // best


@dataclass(frozen=True)
class ArchConfig:
    enc: EncodingConfig = field(default_factory=EncodingConfig)
    N: int = 4
    upscales: tuple = (5, 3, 2, 1, 1)
    base_channels: int = 64
    min_channels: int = 32
    stem_hidden: int = 128
    base_h: int = 9
    base_w: int = 16
    use_adain: bool = True

    def __post_init__(self):
        object.__setattr__(self, "upscales", tuple(int(s) for s in self.upscales))
        if isinstance(self.enc, dict):
            object.__setattr__(self, "enc", EncodingConfig(**self.enc))
        problems = []
        if self.N < 1:
            problems.append(f"N must be >= 1 (got {self.N})")
        if not self.upscales or any(s < 1 for s in self.upscales):
            problems.append(f"upscale factors must be >= 1 (got {self.upscales})")
        for name in ("base_channels", "min_channels", "stem_hidden", "base_h", "base_w"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1 (got {getattr(self, name)})")
        if problems:
            raise ConfigurationError("invalid ArchConfig: " + "; ".join(problems))

    @property
    def total_upscale(self):
        return math.prod(self.upscales)

    @property
    def patch_h(self):
        return self.base_h * self.total_upscale

    @property
    def patch_w(self):
        return self.base_w * self.total_upscale

    @property
    def channels(self):
        """Channel widths ``[C0, c1, ..., c_n]``: stem output, then each block output."""
        ch = [self.base_channels]
        for _ in self.upscales:
            ch.append(max(ch[-1] // 2, self.min_channels))
        return ch

    @property
    def style_width(self):
        return 2 * sum(self.channels[1:])

    def check_frame(self, H, W):
        """Raise unless this architecture produces patches that tile an ``H x W`` frame."""
        if H % self.N or W % self.N:
            raise ConfigurationError(
                f"frame {H}x{W} not divisible by N={self.N}; pad the frames or change N"
            )
        if (H // self.N, W // self.N) != (self.patch_h, self.patch_w):
            raise ConfigurationError(
                f"architecture outputs {self.patch_h}x{self.patch_w} patches "
                f"(base {self.base_h}x{self.base_w}, upscales {self.upscales}) "
                f"but frame {H}x{W} with N={self.N} needs {H // self.N}x{W // self.N}"
            )

    @classmethod
    def for_frame(cls, H, W, N, n_blocks=5, min_base=4, **kw):
        """Build a config whose upscale factors are derived from the patch size."""
        if H % N or W % N:
            raise ConfigurationError(f"frame {H}x{W} not divisible by N={N}; pad the frames or change N")
        ups, bh, bw = derive_upscales(H // N, W // N, n_blocks, min_base)
        return cls(N=N, upscales=ups, base_h=bh, base_w=bw, **kw)

    def to_dict(self):
        d = asdict(self)
        d["upscales"] = list(self.upscales)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["enc"] = EncodingConfig(**d["enc"])
        d["upscales"] = tuple(d["upscales"])
        return cls(**d)


class ModelParams:
    """Ordered collection of named :class:`Parameter` objects."""

    def __init__(self, params=()):
        self._params = {}
        for p in params:
            if p.name in self._params:
                raise ConfigurationError(f"duplicate parameter name {p.name!r}")
            self._params[p.name] = p

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def values(self):
        return {n: p.value for n, p in self._params.items()}

    def copy(self):
        return ModelParams(Parameter(p.name, p.value.copy()) for p in self)

    def astype(self, dtype):
        return ModelParams(Parameter(p.name, p.value.astype(dtype)) for p in self)

    def zero_grad(self):
        for p in self:
            p.grad[...] = 0

    @property
    def dtype(self):
        for p in self:
            return p.value.dtype
        return np.dtype(nx.DEFAULT_DTYPE)

    @classmethod
    def from_arrays(cls, arrays):
        return cls(Parameter(n, np.asarray(v)) for n, v in arrays.items())


def param_shapes(arch):
    """Name -> shape for every tensor of the architecture, in canonical order."""
    d = arch.enc.dim
    ch = arch.channels
    c0 = arch.base_channels
    shapes = {
        "stem.0.weight": (arch.stem_hidden, d),
        "stem.0.bias": (arch.stem_hidden,),
        "stem.1.weight": (c0 * arch.base_h * arch.base_w, arch.stem_hidden),
        "stem.1.bias": (c0 * arch.base_h * arch.base_w,),
    }
    if arch.use_adain:
        shapes["style.weight"] = (arch.style_width, d)
        shapes["style.bias"] = (arch.style_width,)
    for j, s in enumerate(arch.upscales):
        shapes[f"blocks.{j}.weight"] = (ch[j + 1] * s * s, ch[j], 3, 3)
        shapes[f"blocks.{j}.bias"] = (ch[j + 1] * s * s,)
    shapes["head.weight"] = (3, ch[-1], 3, 3)
    shapes["head.bias"] = (3,)
    return shapes


def init_params(arch, seed=0, dtype=nx.DEFAULT_DTYPE):
    """Kaiming-uniform (fan-in) weights, zero biases, zero style layer."""
    rng = np.random.default_rng(seed)
    out = []
    for name, shape in param_shapes(arch).items():
        if name.endswith("bias") or name.startswith("style."):
            value = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = math.sqrt(6.0 / fan_in)
            value = rng.uniform(-bound, bound, size=shape)
        out.append(Parameter(name, value.astype(dtype)))
    return ModelParams(out)


def param_count(params):
    return int(sum(p.size for p in params))


def adain(x, sigma, mu, eps=ADAIN_EPS, tape=None, channels_last=False):
    """``sigma * (x - mean(x)) / sqrt(var(x) + eps) + mu`` per sample and channel.

    ``x`` is ``(B, C, H, W)`` (or ``(B, H, W, C)`` with ``channels_last``);
    ``sigma`` and ``mu`` are ``(B, C)``.
    """
    axes = (1, 2) if channels_last else (2, 3)
    bc = (x.shape[0], x.shape[3]) if channels_last else x.shape[:2]
    if sigma.shape != bc or mu.shape != bc:
        raise DimensionError(f"adain: style shapes {sigma.shape}/{mu.shape} do not match features {x.shape}")

    def expand(v):
        return v[:, None, None, :] if channels_last else v[:, :, None, None]

    mean, var = nx.channel_stats(x, channels_last)
    inv_std = expand(1.0 / np.sqrt(var + eps))
    xhat = (x - expand(mean)) * inv_std
    y = expand(sigma) * xhat + expand(mu)

    def grad(dy):
        dxhat = dy * expand(sigma)
        m1 = dxhat.mean(axis=axes, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=axes, keepdims=True)
        dx = inv_std * (dxhat - m1 - xhat * m2)
        return dx, (dy * xhat).sum(axis=axes), dy.sum(axis=axes)

    if tape is not None:
        tape.record(y, (x, sigma, mu), grad)
    return y


@dataclass
class StyleParams:
    sigma: list
    mu: list


def style_forward(params, arch, emb, tape=None):
    """Per-block AdaIN statistics from the coordinate embedding.

    Returns a :class:`StyleParams` whose entries are ``(B, c_j)`` arrays;
    ``sigma = 1 + raw`` so a zero style layer yields plain instance norm.
    """
    if emb.shape[-1] != arch.enc.dim:
        raise DimensionError(f"embedding length {emb.shape[-1]} != 4l = {arch.enc.dim}")
    raw = nx.linear(emb, params["style.weight"].value, params["style.bias"].value, tape)
    sig, mus = [], []
    off = 0
    for c in arch.channels[1:]:
        s_raw = nx.take_columns(raw, off, off + c, tape)
        mus.append(nx.take_columns(raw, off + c, off + 2 * c, tape))
        sig.append(nx.add_const(s_raw, 1.0, tape))
        off += 2 * c
    return StyleParams(sig, mus)


def psb_forward(x, weight, bias, scale, style=None, tape=None, channels_last=False):
    """conv -> pixel_shuffle -> AdaIN (if ``style`` given) -> GELU."""
    y = nx.conv2d(x, weight, bias, tape, channels_last)
    y = nx.pixel_shuffle(y, scale, tape, channels_last)
    if style is not None:
        sigma, mu = style
        y = adain(y, sigma, mu, ADAIN_EPS, tape, channels_last)
    return nx.gelu(y, tape)


def check_params(params, arch):
    """Raise :class:`ConfigurationError` unless ``params`` fits ``arch`` exactly."""
    expected = param_shapes(arch)
    got = {p.name: p.shape for p in params}
    if got != expected:
        missing = sorted(set(expected) - set(got))
        extra = sorted(set(got) - set(expected))
        wrong = sorted(n for n in set(got) & set(expected) if got[n] != expected[n])
        raise ConfigurationError(
            f"parameters do not match architecture (missing {missing}, unexpected {extra}, wrong shape {wrong})"
        )


def forward(params, arch, emb, tape=None):
    """Decode a batch of embeddings ``(B, 4l)`` into patches ``(B, 3, patch_h, patch_w)``."""
    emb = np.asarray(emb)
    if emb.ndim == 1:
        emb = emb[None]
    B = emb.shape[0]
    h = nx.linear(emb, params["stem.0.weight"].value, params["stem.0.bias"].value, tape)
    h = nx.gelu(h, tape)
    h = nx.linear(h, params["stem.1.weight"].value, params["stem.1.bias"].value, tape)
    # features are kept channels-last internally; the stem vector is read as (h, w, c)
    x = nx.reshape(h, (B, arch.base_h, arch.base_w, arch.base_channels), tape)
    style = style_forward(params, arch, emb, tape) if arch.use_adain else None
    for j, s in enumerate(arch.upscales):
        st = (style.sigma[j], style.mu[j]) if style is not None else None
        x = psb_forward(x, params[f"blocks.{j}.weight"].value, params[f"blocks.{j}.bias"].value,
                        s, st, tape, channels_last=True)
    x = nx.conv2d(x, params["head.weight"].value, params["head.bias"].value, tape, channels_last=True)
    x = nx.transpose(x, (0, 3, 1, 2), tape)
    return nx.sigmoid(x, tape)


def forward_coord(params, arch, c):
    """Single-coordinate decode: ``CoordPair`` -> ``(3, patch_h, patch_w)``."""
    emb = encode(c, arch.enc, dtype=params.dtype)
    return forward(params, arch, emb[None])[0]


def decode_frames(params, arch, n_frames, frames=None, batch_size=64):
    """Evaluate every patch of the requested frames and stitch them; ``(F, 3, H, W)``."""
    from .patchgrid import GridConfig, stitch_array

    frames = list(range(n_frames)) if frames is None else list(frames)
    P = arch.N * arch.N
    t_idx = np.repeat(np.asarray(frames, dtype=np.int64), P)
    p_idx = np.tile(np.arange(P), len(frames))
    emb = encode_indices(t_idx, p_idx, n_frames, P, arch.enc, dtype=params.dtype)
    out = np.empty((len(t_idx), 3, arch.patch_h, arch.patch_w), dtype=params.dtype)
    for s in range(0, len(t_idx), batch_size):
        out[s:s + batch_size] = forward(params, arch, emb[s:s + batch_size])
    g = GridConfig(arch.N, arch.patch_h * arch.N, arch.patch_w * arch.N)
    return stitch_array(out.reshape(len(frames), P, 3, arch.patch_h, arch.patch_w), g)


def match_stem_width(arch, target_count):
    """Return ``arch`` with ``stem_hidden`` chosen so the parameter count is closest to ``target_count``."""
    def count(h):
        return sum(math.prod(s) for s in param_shapes(replace(arch, stem_hidden=h)).values())

    best = min(range(1, 4 * arch.stem_hidden + 256), key=lambda h: abs(count(h) - target_count))
    return replace(arch, stem_hidden=best)
