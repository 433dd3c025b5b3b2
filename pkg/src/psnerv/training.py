"""Overfit the network to one video.

Each epoch visits every non-excluded ``(frame, patch)`` pair exactly once in
a seeded shuffled order, in batches. The gradient is the batch mean.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics as nx
from .embedding import encode_indices
from .errors import ConfigurationError, DimensionError
from .losses import loss_and_grad
from .model import check_params, forward, init_params
from .optim import Adam, lr_at
from .patchgrid import GridConfig, split_array


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    epochs: int = 300
    warm_fraction: float = 0.3
    alpha: float = 0.7
    tv_weight: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    ssim_window: int = 11

    def __post_init__(self):
        object.__setattr__(self, "adam_betas", tuple(self.adam_betas))
        problems = []
        if not 0 < self.alpha < 1:
            problems.append(f"alpha must be in (0, 1), got {self.alpha}")
        if not self.lr > 0:
            problems.append(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if not 0 <= self.warm_fraction < 1:
            problems.append(f"warm_fraction must be in [0, 1), got {self.warm_fraction}")
        if self.tv_weight < 0:
            problems.append(f"tv_weight must be >= 0, got {self.tv_weight}")
        if problems:
            raise ConfigurationError("invalid TrainConfig: " + "; ".join(problems))

    def to_dict(self):
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


@dataclass(frozen=True)
class MaskSpec:
    """``(t_index, p_index)`` pairs withheld from training."""

    excluded: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "excluded", frozenset((int(t), int(p)) for t, p in self.excluded))

    def validate(self, n_frames, n_patches):
        bad = sorted((t, p) for t, p in self.excluded if not (0 <= t < n_frames and 0 <= p < n_patches))
        if bad:
            raise ConfigurationError(f"mask pairs outside the {n_frames}x{n_patches} grid: {bad[:5]}")

    def __len__(self):
        return len(self.excluded)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    psnr: float
    lr: float
    seconds: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    seed: int = 0
    steps: int = 0
    pairs_per_epoch: int = 0

    def append(self, rec):
        if self.records and rec.epoch != self.records[-1].epoch + 1:
            raise ValueError("epochs must be logged in order")
        self.records.append(rec)

    @property
    def losses(self):
        return [r.loss for r in self.records]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss", "psnr", "lr", "seconds"])
        for r in self.records:
            w.writerow([r.epoch, repr(r.loss), repr(r.psnr), repr(r.lr), f"{r.seconds:.6f}"])
        return buf.getvalue()

    def summary(self):
        last = self.records[-1] if self.records else None
        return {
            "seed": self.seed,
            "steps": self.steps,
            "epochs": len(self.records),
            "pairs_per_epoch": self.pairs_per_epoch,
            "final_loss": last.loss if last else None,
            "final_psnr": last.psnr if last else None,
            "total_seconds": sum(r.seconds for r in self.records),
        }

    def to_json(self):
        return json.dumps(self.summary(), indent=2)


def patch_targets(video, arch):
    """``(T, 3, H, W)`` -> ``(T, N*N, 3, h, w)`` after checking the architecture fits."""
    video = np.asarray(video)
    if video.ndim != 4 or video.shape[1] != 3:
        raise DimensionError(f"video must be (T, 3, H, W), got {video.shape}")
    T, _, H, W = video.shape
    arch.check_frame(H, W)
    return split_array(video, GridConfig(arch.N, H, W))


def _batch_psnr(pred, target):
    mse = ((pred.astype(np.float64) - target) ** 2).mean(axis=(1, 2, 3))
    with np.errstate(divide="ignore"):
        return -10.0 * np.log10(mse)


def train(video, arch, cfg=None, mask=None, params=None, keep_mask=None, on_batch=None,
          dtype=nx.DEFAULT_DTYPE):
    """Fit ``arch`` to ``video`` and return ``(params, TrainLog)``.

    ``params`` continues from existing weights instead of a fresh init.
    ``keep_mask`` (name -> 0/1 array) pins pruned weights at zero, for fine-tuning.
    ``on_batch(t_idx, p_idx)`` sees every batch handed to the loss.
    """
    cfg = cfg or TrainConfig()
    mask = mask or MaskSpec()
    targets = patch_targets(video, arch).astype(dtype)
    T, P = targets.shape[:2]
    mask.validate(T, P)

    pairs = np.array([(t, p) for t in range(T) for p in range(P) if (t, p) not in mask.excluded],
                     dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise ConfigurationError("mask excludes every (frame, patch) pair; nothing to train on")
    emb_all = encode_indices(pairs[:, 0], pairs[:, 1], T, P, arch.enc, dtype=dtype)
    tgt_all = targets[pairs[:, 0], pairs[:, 1]]

    if params is None:
        params = init_params(arch, cfg.seed, dtype)
    else:
        check_params(params, arch)
        params = params.astype(dtype)
    if keep_mask is not None:
        for p in params:
            if p.name in keep_mask:
                p.value *= keep_mask[p.name].astype(dtype)

    opt = Adam(params, cfg.adam_betas, cfg.adam_eps)
    rng = np.random.default_rng(cfg.seed)
    n = len(pairs)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    log = TrainLog(seed=cfg.seed, steps=total, pairs_per_epoch=n)

    step = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        loss_sum = psnr_sum = 0.0
        lr = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            if on_batch is not None:
                on_batch(pairs[idx, 0], pairs[idx, 1])
            lr = lr_at(step, total, cfg.lr, cfg.warm_fraction)
            tape = nx.Tape()
            pred = forward(params, arch, emb_all[idx], tape)
            value, dpred = loss_and_grad(pred, tgt_all[idx], cfg.alpha, cfg.tv_weight, cfg.ssim_window)
            grads = nx.backward(tape, pred, dpred)
            for p in params:
                p.grad = grads[p.value]
                if keep_mask is not None and p.name in keep_mask:
                    p.grad = p.grad * keep_mask[p.name]
            opt.step(params, lr)
            if keep_mask is not None:
                for name, m in keep_mask.items():
                    params[name].value *= m
            loss_sum += value * len(idx)
            psnr_sum += float(_batch_psnr(pred, tgt_all[idx]).sum())
            step += 1
        log.append(EpochRecord(epoch, loss_sum / n, psnr_sum / n, lr, time.perf_counter() - t0))
    return params, log
