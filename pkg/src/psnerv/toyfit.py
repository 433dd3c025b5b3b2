"""1D fitting-granularity experiment.

A curve of ``M`` samples is fitted three ways by MLPs of (nearly) equal size:

* point-wise: encoded x -> one value, one input row per sample;
* section-wise: encoded section index -> the ``M / K`` values of that section;
* whole-wise: one constant encoded input -> all ``M`` values.

All three share the optimizer, schedule and step count.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import numerics as nx
from .embedding import EncodingConfig, encode_scalar
from .errors import ConfigurationError
from .numerics import Parameter
from .optim import Adam, lr_at

MODES = ("point", "section", "whole")


def sum_of_sines(x):
    return 0.5 * np.sin(2 * np.pi * x) + 0.3 * np.sin(6 * np.pi * x + 1) + 0.2 * np.sin(14 * np.pi * x + 2)


@dataclass(frozen=True)
class ToyConfig:
    target: str = "sines"  # "sines", "constant", or a path to a .npy/.csv/.txt sample file
    M: int = 512
    K: int = 16
    point_width: int = 64  # hidden width of the point-wise MLP; sets the parameter budget
    steps: int = 2000
    lr: float = 5e-4  # same peak rate as the codec
    warm_fraction: float = 0.3
    seed: int = 0
    enc: EncodingConfig = field(default_factory=lambda: EncodingConfig(b=2.0, l=8))
    tolerance: float = 0.02

    def __post_init__(self):
        if self.M < 1 or self.K < 1 or self.M % self.K:
            raise ConfigurationError(f"M={self.M} must be a positive multiple of K={self.K}")
        if self.steps < 1 or self.lr <= 0:
            raise ConfigurationError("steps must be >= 1 and lr > 0")


def target_curve(cfg):
    x = (np.arange(cfg.M) + 1) / cfg.M
    if cfg.target == "sines":
        return x, sum_of_sines(x)
    if cfg.target == "constant":
        return x, np.full(cfg.M, 0.3)
    path = Path(cfg.target)
    if not path.exists():
        raise ConfigurationError(f"unknown toy target {cfg.target!r}")
    y = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != cfg.M:
        raise ConfigurationError(f"sample file has {y.size} values, config expects M={cfg.M}")
    return x, y


def mlp_param_count(d_in, width, d_out):
    return d_in * width + width + width * width + width + width * d_out + d_out


def mode_io(cfg):
    """Input matrix and output width for each mode; targets are reshaped to match."""
    d = 2 * cfg.enc.l
    x = (np.arange(cfg.M) + 1) / cfg.M
    sec = (np.arange(cfg.K) + 1) / cfg.K
    return {
        "point": (encode_scalar(x, cfg.enc), 1),
        "section": (encode_scalar(sec, cfg.enc), cfg.M // cfg.K),
        "whole": (encode_scalar(np.array([1.0]), cfg.enc), cfg.M),
    }, d


def matched_widths(cfg):
    """Hidden width per mode so every MLP is within ``cfg.tolerance`` of the point-wise budget."""
    io_, d = mode_io(cfg)
    budget = mlp_param_count(d, cfg.point_width, 1)
    widths = {}
    for mode, (_, out) in io_.items():
        w = min(range(1, 4 * cfg.point_width + 1), key=lambda h: abs(mlp_param_count(d, h, out) - budget))
        widths[mode] = w
    counts = {m: mlp_param_count(d, widths[m], io_[m][1]) for m in MODES}
    worst = max(abs(c - budget) / budget for c in counts.values())
    if worst > cfg.tolerance:
        raise ConfigurationError(
            f"cannot match parameter budgets within {cfg.tolerance:.0%} (counts {counts}); "
            "increase point_width or reduce M"
        )
    return widths, counts


def _init_mlp(d_in, width, d_out, rng):
    params = []
    for i, (fi, fo) in enumerate([(d_in, width), (width, width), (width, d_out)]):
        bound = np.sqrt(6.0 / fi)
        params.append(Parameter(f"l{i}.weight", rng.uniform(-bound, bound, (fo, fi))))
        params.append(Parameter(f"l{i}.bias", np.zeros(fo)))
    return params


def _mlp(params, x, tape=None):
    w = [p.value for p in params]
    h = nx.gelu(nx.linear(x, w[0], w[1], tape), tape)
    h = nx.gelu(nx.linear(h, w[2], w[3], tape), tape)
    return nx.linear(h, w[4], w[5], tape)


@dataclass
class ModeResult:
    mse: float
    curve: np.ndarray
    params: int
    width: int
    steps: int
    lr: float


def fit_mode(cfg, mode, width, inputs, targets):
    rng = np.random.default_rng(cfg.seed)
    params = _init_mlp(inputs.shape[1], width, targets.shape[1], rng)
    opt = Adam(params)
    for step in range(cfg.steps):
        tape = nx.Tape()
        pred = _mlp(params, inputs, tape)
        diff = pred - targets
        grads = nx.backward(tape, pred, 2.0 * diff / diff.size)
        for p in params:
            p.grad = grads[p.value]
        opt.step(params, lr_at(step, cfg.steps, cfg.lr, cfg.warm_fraction))
    curve = _mlp(params, inputs).ravel()
    return curve, int(sum(p.size for p in params))


def run_toy(cfg=None):
    """Fit all three modes; returns ``{mode: ModeResult}``."""
    cfg = cfg or ToyConfig()
    x, y = target_curve(cfg)
    widths, _ = matched_widths(cfg)
    io_, _ = mode_io(cfg)
    results = {}
    for mode in MODES:
        inputs, out = io_[mode]
        targets = y.reshape(-1, out)
        curve, n = fit_mode(cfg, mode, widths[mode], inputs, targets)
        results[mode] = ModeResult(float(np.mean((curve - y) ** 2)), curve, n, widths[mode], cfg.steps, cfg.lr)
    return results


def results_csv(cfg, results):
    x, y = target_curve(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "target", "fit_point", "fit_section", "fit_whole"])
    for i in range(cfg.M):
        w.writerow([repr(float(x[i])), repr(float(y[i]))] + [repr(float(results[m].curve[i])) for m in MODES])
    return buf.getvalue()


def results_summary(cfg, results):
    return {
        "config": {k: (v.__dict__ if isinstance(v, EncodingConfig) else v) for k, v in cfg.__dict__.items()},
        "modes": {m: {"mse": r.mse, "params": r.params, "width": r.width, "steps": r.steps, "lr": r.lr}
                  for m, r in results.items()},
    }


def results_svg(cfg, results, width=640, height=320):
    """A bare-bones line plot of target and fits."""
    x, y = target_curve(cfg)
    series = [("target", y, "#000")] + [(m, results[m].curve, c) for m, c in
                                         zip(MODES, ("#d62728", "#2ca02c", "#1f77b4"))]
    lo = min(float(np.min(s)) for _, s, _ in series)
    hi = max(float(np.max(s)) for _, s, _ in series)
    span = hi - lo or 1.0

    def pts(s):
        return " ".join(f"{width * (x[i] - x[0]) / (x[-1] - x[0] or 1):.1f},"
                        f"{height - height * (s[i] - lo) / span:.1f}" for i in range(len(s)))

    lines = [f'<polyline fill="none" stroke="{c}" stroke-width="1" points="{pts(s)}"><title>{n}</title></polyline>'
             for n, s, c in series]
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
            + "".join(lines) + "</svg>\n")


def seed_sweep(cfg, seeds):
    """Per-mode MSE lists over several init seeds."""
    out = {m: [] for m in MODES}
    for s in seeds:
        res = run_toy(replace(cfg, seed=s))
        for m in MODES:
            out[m].append(res[m].mse)
    return out


__all__ = ["ToyConfig", "run_toy", "seed_sweep", "matched_widths", "results_csv", "results_summary",
           "results_svg", "sum_of_sines", "target_curve", "MODES"]
