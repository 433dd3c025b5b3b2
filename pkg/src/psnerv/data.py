"""Synthetic test video and PNG frame-directory I/O."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

FRAME_PATTERN = "frame_{:06d}.png"
_FRAME_RE = re.compile(r"^frame_(\d{6})\.png$")


def toy_video(n_frames=8, height=64, width=64, seed=0):
    """Moving colour gradient with a soft-edged disk drifting across it; ``(T, 3, H, W)`` in [0, 1]."""
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0, 2 * np.pi, size=3)
    color = rng.uniform(0.6, 0.9, size=3) * np.array([1.0, 0.4, 0.5])
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    frames = np.empty((n_frames, 3, height, width))
    for t in range(n_frames):
        s = t / max(n_frames, 1)
        bg = np.stack([
            0.5 + 0.3 * np.sin(2 * np.pi * (x / width + s * 0.5) + phase[0]),
            0.5 + 0.3 * np.sin(2 * np.pi * (y / height - s * 0.5) + phase[1]),
            0.5 + 0.25 * np.cos(2 * np.pi * ((x + y) / (width + height) + s) + phase[2]),
        ])
        cy = height * (0.3 + 0.4 * s)
        cx = width * (0.25 + 0.5 * s)
        r = 0.2 * min(height, width)
        d = np.sqrt((y - cy) ** 2 + (x - cx) ** 2)
        alpha = 1.0 / (1.0 + np.exp((d - r) / 1.5))
        frames[t] = bg * (1 - alpha) + color[:, None, None] * alpha
    return np.clip(frames, 0.0, 1.0)


def toy_arch(**overrides):
    """Architecture sized for :func:`toy_video` (64x64, N=2, 32x32 patches)."""
    from .embedding import EncodingConfig
    from .model import ArchConfig

    # about 106k parameters; l=40 keeps the style layer from dominating the budget
    kw = dict(base_channels=22, min_channels=22, stem_hidden=16, enc=EncodingConfig(1.25, 40))
    kw.update(overrides)
    return ArchConfig.for_frame(64, 64, 2, **kw)


def to_uint8(frames):
    """[0, 1] floats -> uint8 with round-half-away-from-zero."""
    v = np.clip(np.asarray(frames, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def list_frames(frames_dir):
    d = Path(frames_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"frames directory {d} does not exist")
    files = sorted(p for p in d.iterdir() if _FRAME_RE.match(p.name))
    if not files:
        raise FileNotFoundError(f"no frame_%06d.png files in {d}")
    return files


def read_frames(frames_dir):
    """Load ``frame_%06d.png`` files as ``(T, 3, H, W)`` float32 in [0, 1]."""
    from PIL import Image

    files = list_frames(frames_dir)
    arrays, bad = [], []
    for f in files:
        try:
            with Image.open(f) as im:
                if im.mode not in ("RGB", "RGBA", "L", "P"):
                    bad.append(f"{f.name}: unsupported mode {im.mode}")
                    continue
                arrays.append(np.asarray(im.convert("RGB")))
        except OSError as e:
            bad.append(f"{f.name}: {e}")
    if not bad:
        sizes = {a.shape for a in arrays}
        if len(sizes) > 1:
            first = arrays[0].shape
            bad = [f"{f.name}: size {a.shape[1]}x{a.shape[0]} != {first[1]}x{first[0]}"
                   for f, a in zip(files, arrays) if a.shape != first]
    if bad:
        raise OSError("unreadable or inconsistent frames:\n  " + "\n  ".join(bad))
    video = np.stack(arrays).astype(np.float32) / 255.0
    return np.ascontiguousarray(video.transpose(0, 3, 1, 2))


def write_frames(frames, out_dir, indices=None):
    """Write ``(T, 3, H, W)`` frames as 8-bit PNGs; returns the written paths."""
    from PIL import Image

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = to_uint8(frames).transpose(0, 2, 3, 1)
    indices = range(len(data)) if indices is None else indices
    paths = []
    for i, img in zip(indices, data):
        p = out / FRAME_PATTERN.format(i)
        Image.fromarray(img, mode="RGB").save(p, format="PNG", optimize=False)
        paths.append(p)
    return paths
