"""
Point, section or whole?
========================

Three equally sized MLPs fit the same 1D curve: one value per input,
one section per input, or everything from a single input.
"""
import numpy as np

from psnerv.toyfit import MODES, ToyConfig, matched_widths, results_svg, run_toy, seed_sweep

cfg = ToyConfig()
widths, counts = matched_widths(cfg)
for m in MODES:
    print(f"{m:8s} hidden width {widths[m]:3d}, {counts[m]} parameters")

res = run_toy(cfg)
for m in MODES:
    print(f"{m:8s} MSE {res[m].mse:.3e}")
with open("granularity.svg", "w") as f:
    f.write(results_svg(cfg, res))

# a single seed can go either way between point and section; the medians are steadier
sweep = seed_sweep(cfg, range(5))
print("median MSE over 5 seeds:", {m: f"{np.median(v):.2e}" for m, v in sweep.items()})
