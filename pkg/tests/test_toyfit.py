from dataclasses import replace

import numpy as np
import pytest

from psnerv.errors import ConfigurationError
from psnerv.toyfit import (MODES, ToyConfig, matched_widths, mode_io, results_csv, results_summary, run_toy,
                           sum_of_sines, target_curve)


def test_default_target():
    x, y = target_curve(ToyConfig())
    assert x.shape == (512,) and x[-1] == 1.0
    np.testing.assert_allclose(y, 0.5 * np.sin(2 * np.pi * x) + 0.3 * np.sin(6 * np.pi * x + 1)
                               + 0.2 * np.sin(14 * np.pi * x + 2))


def test_budgets_match_within_two_percent():
    widths, counts = matched_widths(ToyConfig())
    budget = counts["point"]
    assert all(abs(c - budget) / budget <= 0.02 for c in counts.values())


def test_budget_mismatch_raises():
    with pytest.raises(ConfigurationError, match="budget"):
        matched_widths(ToyConfig(M=4096, K=2, point_width=8))


def test_mode_shapes():
    io_, d = mode_io(ToyConfig(M=64, K=8))
    assert io_["point"][0].shape == (64, d) and io_["point"][1] == 1
    assert io_["section"][0].shape == (8, d) and io_["section"][1] == 8
    assert io_["whole"][0].shape == (1, d) and io_["whole"][1] == 64


def test_constant_target_learned_by_every_mode():
    cfg = ToyConfig(target="constant", M=128, K=8, lr=1e-2, steps=2000)
    res = run_toy(cfg)
    for m in MODES:
        assert res[m].mse < 1e-6, m


def test_same_settings_and_output_length():
    cfg = ToyConfig(M=64, K=8, steps=30)
    res = run_toy(cfg)
    assert {(r.steps, r.lr) for r in res.values()} == {(30, cfg.lr)}
    assert all(r.curve.shape == (64,) for r in res.values())
    assert results_csv(cfg, res).count("\n") == 65
    assert set(results_summary(cfg, res)["modes"]) == set(MODES)


def test_sample_file_target(tmp_path):
    y = sum_of_sines((np.arange(64) + 1) / 64)
    np.save(tmp_path / "y.npy", y)
    np.savetxt(tmp_path / "y.csv", y, delimiter=",")
    for name in ("y.npy", "y.csv"):
        _, got = target_curve(ToyConfig(target=str(tmp_path / name), M=64, K=8))
        np.testing.assert_allclose(got, y)
    with pytest.raises(ConfigurationError):
        target_curve(ToyConfig(target=str(tmp_path / "y.npy"), M=128, K=8))
    with pytest.raises(ConfigurationError):
        target_curve(ToyConfig(target="nope"))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ToyConfig(M=100, K=16)
