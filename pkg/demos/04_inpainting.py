"""
Filling in missing patches
==========================

Leave some (frame, patch) pairs out of training entirely, then ask the
network for them anyway. The answer comes from what it learned about the
neighbouring frames and patches.
"""
import os

import numpy as np

from psnerv.data import toy_arch, toy_video
from psnerv.model import decode_frames
from psnerv.patchgrid import GridConfig, split_array
from psnerv.training import MaskSpec, TrainConfig, train

epochs = int(os.environ.get("DEMO_EPOCHS", 1000))
video = toy_video()
arch = toy_arch()
holes = MaskSpec({(2, 1), (5, 3), (6, 0)})
seen = set()
params, _ = train(video, arch, TrainConfig(epochs=epochs), mask=holes,
                  on_batch=lambda t, p: seen.update(zip(t.tolist(), p.tolist())))
print("masked pairs seen by the loss:", sorted(seen & holes.excluded))

rec = decode_frames(params, arch, len(video))
g = GridConfig(2, 64, 64)
a, b = split_array(rec.astype(np.float64), g), split_array(video, g)
for t, p in sorted(holes.excluded):
    mse = np.mean((a[t, p] - b[t, p]) ** 2)
    print(f"frame {t} patch {p}: PSNR {-10 * np.log10(mse):.2f} dB (never trained on)")
keep = np.ones((len(video), 4), dtype=bool)
for t, p in holes.excluded:
    keep[t, p] = False
print(f"trained patches: PSNR {-10 * np.log10(np.mean((a[keep] - b[keep]) ** 2)):.2f} dB")
