"""
Overfitting a tiny video
========================

The codec stores a video as network weights. Here the network is fitted to
the synthetic 8-frame clip, decoded back and scored.

The full run (1000 epochs = 2000 steps) takes a few minutes on one core.
Set DEMO_EPOCHS for a quicker look.
"""
import os
import time

import numpy as np

from psnerv.data import toy_arch, toy_video, write_frames
from psnerv.metrics import quality_report
from psnerv.model import decode_frames, param_count
from psnerv.training import TrainConfig, train

epochs = int(os.environ.get("DEMO_EPOCHS", 1000))
video = toy_video()
arch = toy_arch()
print("upscales", arch.upscales, "base grid", (arch.base_h, arch.base_w), "channels", arch.channels)

t0 = time.perf_counter()
params, log = train(video, arch, TrainConfig(epochs=epochs))
print(f"{param_count(params)} parameters, {log.steps} steps in {time.perf_counter() - t0:.0f} s")

# loss and PSNR every tenth of the run
for r in log.records[::max(1, epochs // 10)]:
    print(f"epoch {r.epoch:5d}  loss {r.loss:.4f}  train PSNR {r.psnr:.2f}  lr {r.lr:.2e}")

rec = decode_frames(params, arch, len(video))
rep = quality_report(video, rec)
print("decode PSNR per frame", np.round(rep.psnr_per_frame, 2))
print(f"mean PSNR {rep.psnr_mean:.2f} dB, mean MS-SSIM {rep.ms_ssim_mean:.4f}")

out = os.environ.get("DEMO_OUT", "demo_out")
write_frames(video, os.path.join(out, "source"))
write_frames(rec, os.path.join(out, "decoded"))
np.savez(os.path.join(out, "toy_params.npz"), **params.values())
print("frames and weights written under", out)
