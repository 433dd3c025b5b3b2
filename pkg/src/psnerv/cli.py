"""Command-line front end: ``python -m psnerv <command> ...``.

Commands: encode, decode, compress, metrics, inpaint, toyfit, inspect.

Settings come from built-in defaults, then an optional JSON file
(``--config``), then command-line flags. Every command validates all of its
inputs before it writes anything, and echoes the effective settings next to
its outputs. Set ``PSNERV_LOG=DEBUG`` (or INFO, WARNING) for more or less
chatter on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .compression import compress, inspect_bytes, load, save_raw
from .data import list_frames, read_frames, write_frames
from .embedding import EncodingConfig
from .errors import ConfigurationError, PSNeRVError
from .metrics import quality_report
from .model import ArchConfig, decode_frames, param_shapes
from .patchgrid import GridConfig, crop, pad_to_multiple
from .toyfit import MODES, ToyConfig, results_csv, results_summary, results_svg, run_toy
from .training import MaskSpec, TrainConfig, train

log = logging.getLogger("psnerv")

CONFIG_NAME = "config.json"


@dataclass
class RunConfig:
    """Flat view of every tunable; JSON config files use these keys."""

    # grid / architecture
    N: int = 4
    n_blocks: int = 5
    upscales: list | None = None  # derived from the patch size when unset
    min_base: int = 4
    base_channels: int = 64
    min_channels: int = 32
    stem_hidden: int = 128
    use_adain: bool = True
    enc_b: float = 1.25
    enc_l: int = 80
    pad: bool = False
    # training
    lr: float = 5e-4
    epochs: int = 300
    warm_fraction: float = 0.3
    alpha: float = 0.7
    tv_weight: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    adam_betas: list = field(default_factory=lambda: [0.9, 0.999])
    adam_eps: float = 1e-8
    ssim_window: int = 11
    # compression
    bits: int = 8
    sparsity: float = 0.0
    table_mode: str = "global"

    def train_config(self):
        return TrainConfig(lr=self.lr, epochs=self.epochs, warm_fraction=self.warm_fraction, alpha=self.alpha,
                           tv_weight=self.tv_weight, batch_size=self.batch_size, seed=self.seed,
                           adam_betas=tuple(self.adam_betas), adam_eps=self.adam_eps,
                           ssim_window=self.ssim_window)

    def arch_for(self, H, W):
        enc = EncodingConfig(self.enc_b, self.enc_l)
        kw = dict(enc=enc, base_channels=self.base_channels, min_channels=self.min_channels,
                  stem_hidden=self.stem_hidden, use_adain=self.use_adain)
        if self.upscales is None:
            return ArchConfig.for_frame(H, W, self.N, self.n_blocks, self.min_base, **kw)
        ups = tuple(int(s) for s in self.upscales)
        total = int(np.prod(ups))
        ph, pw = H // self.N, W // self.N
        if ph % total or pw % total:
            raise ConfigurationError(f"upscales {ups} (total {total}) do not divide the {ph}x{pw} patch")
        return ArchConfig(N=self.N, upscales=ups, base_h=ph // total, base_w=pw // total, **kw)


def _run_config_fields():
    return {f.name: f for f in fields(RunConfig)}


def load_run_config(path=None, overrides=None):
    """Defaults < JSON file < explicit overrides (keys whose value is not None)."""
    cfg = RunConfig()
    known = _run_config_fields()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as e:
            raise ConfigurationError(f"cannot read config file {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"config file {path} must hold a JSON object")
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown config keys in {path}: {unknown}")
        cfg = replace(cfg, **data)
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg = replace(cfg, **{k: v})
    return cfg


def validate_run_config(cfg, frame_size=None):
    """Collect every problem into one :class:`ConfigurationError`; returns ``(arch, train_cfg)``."""
    problems = []
    train_cfg = arch = None
    try:
        train_cfg = cfg.train_config()
    except ConfigurationError as e:
        problems.append(str(e))
    if not (isinstance(cfg.bits, int) and 1 <= cfg.bits <= 16):
        problems.append(f"bits must be an integer in [1, 16], got {cfg.bits}")
    if not 0 <= cfg.sparsity < 1:
        problems.append(f"sparsity must be in [0, 1), got {cfg.sparsity}")
    if cfg.table_mode not in ("global", "per-tensor"):
        problems.append(f"table_mode must be 'global' or 'per-tensor', got {cfg.table_mode!r}")
    if cfg.N < 1:
        problems.append(f"N must be >= 1, got {cfg.N}")
    elif frame_size is not None:
        H, W = frame_size
        if (H % cfg.N or W % cfg.N) and not cfg.pad:
            problems.append(f"frame {H}x{W} not divisible by N={cfg.N}; pass --pad or choose a different N")
        else:
            if cfg.pad:
                H, W = H + (-H) % cfg.N, W + (-W) % cfg.N
            try:
                arch = cfg.arch_for(H, W)
            except ConfigurationError as e:
                problems.append(str(e))
    if problems:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(problems))
    return arch, train_cfg


def _prepare_video(video, cfg):
    if cfg.pad:
        return pad_to_multiple(video, cfg.N)
    return video, video.shape[-2:]


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _echo_config(out_dir, cfg, extra=None):
    d = asdict(cfg)
    if extra:
        d.update(extra)
    _write_json(Path(out_dir) / CONFIG_NAME, d)


def _train_and_save(frames_dir, out_dir, cfg, mask=None):
    video = read_frames(frames_dir)
    T, _, H, W = video.shape
    arch, train_cfg = validate_run_config(cfg, (H, W))
    if mask is not None:
        mask.validate(T, arch.N * arch.N)
        if len(mask) >= T * arch.N * arch.N:
            raise ConfigurationError("mask excludes every (frame, patch) pair; nothing to train on")
    padded, size = _prepare_video(video, cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log.info("training %s on %d frames of %dx%d (%d params)", arch.upscales, T, H, W,
             sum(int(np.prod(s)) for s in param_shapes(arch).values()))
    params, tlog = train(padded, arch, train_cfg, mask=mask)
    meta = {"n_frames": T, "frame_size": [int(size[0]), int(size[1])], "seed": cfg.seed,
            "train": train_cfg.to_dict()}
    (out / "model.psnv").write_bytes(save_raw(params, arch, meta))
    (out / "train_log.csv").write_text(tlog.to_csv())
    (out / "train_log.json").write_text(tlog.to_json() + "\n")
    _echo_config(out, cfg, {"arch": arch.to_dict()})
    return params, arch, meta, tlog


def _decode_to(model, out_dir, frames=None):
    meta = model.meta
    T = int(meta.get("n_frames", 0))
    if T < 1:
        raise ConfigurationError("model file does not record the number of frames; cannot decode")
    frames = list(range(T)) if frames is None else frames
    bad = [f for f in frames if not 0 <= f < T]
    if bad:
        raise ConfigurationError(f"frame indices out of range 0..{T - 1}: {bad}")
    rec = decode_frames(model.params, model.arch, T, frames)
    size = meta.get("frame_size")
    if size:
        rec = crop(rec, tuple(size))
    return write_frames(rec, out_dir, frames)


def _parse_frames(spec):
    if spec is None:
        return None
    out = []
    for part in spec.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def read_mask(path, n_frames, N, frame_size):
    """Excluded ``(t, patch)`` pairs from a JSON list of pairs or a directory of mask PNGs.

    With PNG masks, a patch is excluded when any nonzero pixel of that frame's
    mask falls inside it.
    """
    p = Path(path)
    if p.is_dir():
        masks = read_frames(p)
        if masks.shape[0] != n_frames or masks.shape[-2:] != tuple(frame_size):
            raise ConfigurationError(
                f"mask directory holds {masks.shape[0]} masks of {masks.shape[3]}x{masks.shape[2]}, "
                f"video has {n_frames} frames of {frame_size[1]}x{frame_size[0]}")
        H, W = frame_size
        Hp, Wp = H + (-H) % N, W + (-W) % N
        hit = np.zeros((n_frames, Hp, Wp), dtype=bool)
        hit[:, :H, :W] = masks.max(axis=1) > 0
        ph, pw = Hp // N, Wp // N
        blocks = hit.reshape(n_frames, N, ph, N, pw).any(axis=(2, 4))
        return MaskSpec({(int(t), int(r * N + c)) for t, r, c in zip(*np.nonzero(blocks))})
    try:
        pairs = json.loads(p.read_text())
        return MaskSpec({(int(t), int(i)) for t, i in pairs})
    except (OSError, ValueError, TypeError) as e:
        raise ConfigurationError(f"cannot read mask file {p}: expected a JSON list of [t, patch] pairs ({e})") from e


def _region_psnr(ref, rec, mask, N):
    """PSNR over the masked and the unmasked patches separately."""
    g = GridConfig(N, ref.shape[-2], ref.shape[-1])
    from .patchgrid import split_array

    a, b = split_array(ref, g), split_array(rec, g)
    sel = np.zeros(a.shape[:2], dtype=bool)
    for t, p in mask.excluded:
        sel[t, p] = True

    def psnr_of(s):
        if not s.any():
            return None
        mse = float(np.mean((a[s].astype(np.float64) - b[s]) ** 2))
        return float("inf") if mse == 0 else -10 * np.log10(mse)

    return psnr_of(sel), psnr_of(~sel)


# ---- commands -------------------------------------------------------------

def cmd_encode(args):
    cfg = load_run_config(args.config, _overrides(args))
    list_frames(args.frames_dir)
    _train_and_save(args.frames_dir, args.out, cfg)
    print(f"wrote {Path(args.out) / 'model.psnv'}")
    return 0


def cmd_decode(args):
    model = load(Path(args.model).read_bytes())
    frames = _parse_frames(args.frames)
    paths = _decode_to(model, args.out, frames)
    print(f"wrote {len(paths)} frames to {args.out}")
    return 0


def cmd_compress(args):
    cfg = load_run_config(args.config, {"bits": args.bits, "sparsity": args.sparsity, "table_mode": args.table_mode})
    validate_run_config(cfg)
    model = load(Path(args.model).read_bytes())
    meta = {k: v for k, v in model.meta.items() if k not in ("arch", "compression")}
    data, report = compress(model.params, model.arch, cfg.bits, cfg.sparsity, cfg.table_mode, meta)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)
    rep = report.to_dict()
    if meta.get("n_frames") and meta.get("frame_size"):
        from .metrics import bpp

        H, W = meta["frame_size"]
        rep["bpp"] = bpp(len(data), meta["n_frames"], H, W)
    _write_json(out.with_name(out.name + ".report.json"), rep)
    print(json.dumps(rep, indent=2, sort_keys=True))
    return 0


def cmd_metrics(args):
    a = read_frames(args.a_dir)
    b = read_frames(args.b_dir)
    if a.shape != b.shape:
        raise ConfigurationError(f"frame sets differ: {a.shape[0]} frames of {a.shape[3]}x{a.shape[2]} vs "
                                 f"{b.shape[0]} frames of {b.shape[3]}x{b.shape[2]}")
    size = Path(args.model_file).stat().st_size if args.model_file else None
    text = quality_report(a, b, size).to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_inpaint(args):
    cfg = load_run_config(args.config, _overrides(args))
    files = list_frames(args.frames_dir)
    from PIL import Image

    with Image.open(files[0]) as im:
        W, H = im.size
    mask = read_mask(args.mask, len(files), cfg.N, (H, W))
    params, arch, meta, _ = _train_and_save(args.frames_dir, args.out, cfg, mask)
    from .compression.container import LoadedModel

    model = LoadedModel(params, arch, meta)
    _decode_to(model, Path(args.out) / "frames")
    video = read_frames(args.frames_dir)
    rec = read_frames(Path(args.out) / "frames")
    padded, _ = _prepare_video(video, cfg)
    rec_p, _ = _prepare_video(rec, cfg)
    masked, unmasked = _region_psnr(padded, rec_p, mask, arch.N)
    summary = {"excluded_pairs": sorted(list(p) for p in mask.excluded),
               "masked_psnr": masked, "unmasked_psnr": unmasked}
    _write_json(Path(args.out) / "inpaint.json", summary)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_toyfit(args):
    base = ToyConfig()
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as e:
            raise ConfigurationError(f"cannot read config file {args.config}: {e}") from e
    for k in ("target", "M", "K", "steps", "lr", "seed", "point_width"):
        v = getattr(args, k, None)
        if v is not None:
            data[k] = v
    if "enc" in data and isinstance(data["enc"], dict):
        data["enc"] = EncodingConfig(**data["enc"])
    unknown = sorted(set(data) - {f.name for f in fields(ToyConfig)})
    if unknown:
        raise ConfigurationError(f"unknown toyfit keys: {unknown}")
    cfg = replace(base, **data)
    from .toyfit import matched_widths, target_curve

    target_curve(cfg)
    matched_widths(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = run_toy(cfg)
    (out / "toyfit.csv").write_text(results_csv(cfg, res))
    summary = results_summary(cfg, res)
    _write_json(out / "toyfit.json", summary)
    if args.svg:
        (out / "toyfit.svg").write_text(results_svg(cfg, res))
    for m in MODES:
        print(f"{m:8s} mse={res[m].mse:.3e} params={res[m].params} width={res[m].width}")
    return 0


def cmd_inspect(args):
    info = inspect_bytes(Path(args.model).read_bytes())
    if args.json:
        print(json.dumps(info, indent=2, sort_keys=True))
        return 0
    comp = info["meta"].get("compression", {})
    print(f"format      {info['magic']} v{info['version']}, {info['file_bytes']} bytes")
    print(f"params      {info['param_count']}")
    print(f"bits        {info['bits'] if info['bits'] is not None else 'none (raw float32)'}")
    print(f"sparsity    {info['sparsity']:.4f} ({comp.get('pruned', 0)} of {comp.get('prunable', 0)} weights)")
    print(f"tables      {info['table_mode']}"
          + (f", {info['global_table_entries']} entries" if info["global_table_entries"] else ""))
    for k, v in info["sections"].items():
        print(f"  {k:9s} {v:>10d} bytes")
    for t in info["tensors"]:
        print(f"  {t['name']:16s} {str(tuple(t['shape'])):20s} {t['payload_bytes']:>8d} bytes")
    return 0


# ---- argument parsing -----------------------------------------------------

_RUN_FLAGS = [
    ("N", int, "patches per side"),
    ("base_channels", int, None), ("min_channels", int, None), ("stem_hidden", int, None),
    ("enc_b", float, None), ("enc_l", int, None),
    ("lr", float, None), ("epochs", int, None), ("batch_size", int, None), ("seed", int, None),
    ("alpha", float, None), ("tv_weight", float, None), ("warm_fraction", float, None),
    ("ssim_window", int, None), ("n_blocks", int, None), ("min_base", int, None),
]


def _add_run_flags(p):
    p.add_argument("--config", help="JSON file with RunConfig keys")
    for name, typ, help_ in _RUN_FLAGS:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, help=help_)
    p.add_argument("--upscales", type=lambda s: [int(x) for x in s.split(",")],
                   help="comma-separated upscale factors (default: derived from the patch size)")
    p.add_argument("--no-adain", dest="use_adain", action="store_const", const=False)
    p.add_argument("--pad", action="store_const", const=True, default=None,
                   help="edge-pad frames up to a multiple of N instead of failing")


def _overrides(args):
    keys = [n for n, _, _ in _RUN_FLAGS] + ["upscales", "use_adain", "pad"]
    return {k: getattr(args, k, None) for k in keys}


def build_parser():
    p = argparse.ArgumentParser(prog="psnerv", description="Patch-wise implicit neural video codec")
    p.add_argument("--version", action="version", version=f"psnerv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("encode", help="fit a model to a frame directory")
    e.add_argument("frames_dir")
    e.add_argument("out", help="output directory (model.psnv, train_log.csv/json, config.json)")
    _add_run_flags(e)
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help="render frames from a model file")
    d.add_argument("model")
    d.add_argument("out")
    d.add_argument("--frames", help="e.g. 0,2,5-7 (default: all)")
    d.set_defaults(func=cmd_decode)

    c = sub.add_parser("compress", help="prune, quantize and entropy-code a model")
    c.add_argument("model")
    c.add_argument("out")
    c.add_argument("--config")
    c.add_argument("--bits", type=int)
    c.add_argument("--sparsity", type=float)
    c.add_argument("--table-mode", dest="table_mode", choices=["global", "per-tensor"])
    c.set_defaults(func=cmd_compress)

    m = sub.add_parser("metrics", help="PSNR / MS-SSIM between two frame directories")
    m.add_argument("a_dir")
    m.add_argument("b_dir")
    m.add_argument("--model-file", help="report bits per pixel for this model file")
    m.add_argument("--out", help="also write the JSON report here")
    m.set_defaults(func=cmd_metrics)

    i = sub.add_parser("inpaint", help="train without some patches, then render them")
    i.add_argument("frames_dir")
    i.add_argument("mask", help="JSON list of [t, patch] pairs, or a directory of mask PNGs")
    i.add_argument("out")
    _add_run_flags(i)
    i.set_defaults(func=cmd_inpaint)

    t = sub.add_parser("toyfit", help="1D point/section/whole fitting comparison")
    t.add_argument("out")
    t.add_argument("--config")
    t.add_argument("--target", help="'sines', 'constant', or a .npy/.csv file")
    t.add_argument("--M", type=int)
    t.add_argument("--K", type=int)
    t.add_argument("--steps", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--point-width", dest="point_width", type=int)
    t.add_argument("--svg", action="store_true", help="also write a line plot")
    t.set_defaults(func=cmd_toyfit)

    s = sub.add_parser("inspect", help="describe a model file without decoding it")
    s.add_argument("model")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None):
    logging.basicConfig(level=os.environ.get("PSNERV_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PSNeRVError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


__all__ = ["RunConfig", "load_run_config", "validate_run_config", "read_mask", "build_parser", "main"]
