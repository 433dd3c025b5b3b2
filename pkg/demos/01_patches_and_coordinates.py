"""
Patches and coordinates
=======================

A frame is cut into an N x N grid of patches. Each patch is addressed by
(frame index t, patch index i), and that pair is what the network sees,
after a Fourier expansion.
"""
import numpy as np

from psnerv.data import toy_video
from psnerv.embedding import EncodingConfig, encode, normalize
from psnerv.patchgrid import GridConfig, split, stitch

video = toy_video()                      # (T, 3, H, W) in [0, 1]
print("video", video.shape)

# 2x2 grid on a 64x64 frame -> four 32x32 patches, row-major
g = GridConfig(N=2, H=64, W=64)
patches = split(video[3], g, t_index=3)
for p in patches:
    print(f"patch {p.p_index}: origin {g.origin(p.p_index)}, mean colour {p.pixels.mean(axis=(1, 2)).round(3)}")

# stitching is an exact inverse
assert np.array_equal(stitch(patches, g), video[3])

# indices are mapped to (0, 1] and expanded; t terms first, then i terms
cfg = EncodingConfig(b=1.25, l=80)
c = normalize(3, len(video), 2, g.n_patches)
print("normalised coordinate", c)
e = encode(c, cfg)
print("embedding length", e.shape[0], "= 4l; range", e.min().round(3), "..", e.max().round(3))

# neighbouring frames differ mostly in the high-frequency terms
e_next = encode(normalize(4, len(video), 2, g.n_patches), cfg)
diff = np.abs(e - e_next)[:2 * cfg.l]
print("per-level |difference| (first 8 levels):", diff[0::2][:8].round(3))
