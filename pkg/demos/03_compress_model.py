"""
Squeezing the weights
=====================

Prune the smallest weights, quantize each tensor to a few bits, and
Huffman-code the integer codes. Reuses the weights saved by
02_overfit_toy_video.py when available.
"""
import os

import numpy as np

from psnerv.compression import compress, load, save_raw
from psnerv.data import toy_arch, toy_video
from psnerv.metrics import bpp, psnr
from psnerv.model import ModelParams, decode_frames, init_params
from psnerv.training import TrainConfig, train

video = toy_video()
arch = toy_arch()
saved = os.path.join(os.environ.get("DEMO_OUT", "demo_out"), "toy_params.npz")
if os.path.exists(saved):
    params = ModelParams.from_arrays(dict(np.load(saved)))
else:
    print("no saved weights; training briefly")
    params, _ = train(video, arch, TrainConfig(epochs=int(os.environ.get("DEMO_EPOCHS", 100))))

T, _, H, W = video.shape
ref = decode_frames(params, arch, T)
raw = save_raw(params, arch)
print(f"raw float32 file: {len(raw)} bytes, {bpp(len(raw), T, H, W):.3f} bpp, PSNR {psnr(ref, video):.2f} dB")

for bits, sparsity in [(16, 0.0), (8, 0.0), (8, 0.4), (6, 0.4), (4, 0.4)]:
    data, report = compress(params, arch, bits, sparsity)
    rec = decode_frames(load(data).params, arch, T)
    print(f"{bits:2d} bits, {sparsity:.0%} pruned: {len(data):6d} bytes, {bpp(len(data), T, H, W):.3f} bpp, "
          f"PSNR {psnr(rec, video):.2f} dB, payload {report.payload_bytes} bytes")

# the same pipeline on untrained weights: fitted weights are the part worth keeping
fresh = compress(init_params(arch, 0), arch, 8, 0.4)[0]
print("untrained model at 8 bits / 40%:", len(fresh), "bytes")
