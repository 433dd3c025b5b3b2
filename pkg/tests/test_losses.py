import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import numeric_grad, rel_err
from psnerv.errors import ConfigurationError
from psnerv.losses import gaussian_window, loss_and_grad, ssim, ssim_and_grad, tv, tv_and_grad

C1, C2 = 0.01 ** 2, 0.03 ** 2


def naive_ssim(a, b, size=11, sigma=1.5):
    g = gaussian_window(size, sigma)
    w = np.outer(g, g)
    vals = []
    for c in range(a.shape[0]):
        for i in range(a.shape[1] - size + 1):
            for j in range(a.shape[2] - size + 1):
                x = a[c, i:i + size, j:j + size]
                y = b[c, i:i + size, j:j + size]
                mx, my = (w * x).sum(), (w * y).sum()
                vx = (w * (x - mx) ** 2).sum()
                vy = (w * (y - my) ** 2).sum()
                cxy = (w * (x - mx) * (y - my)).sum()
                vals.append((2 * mx * my + C1) * (2 * cxy + C2) / ((mx ** 2 + my ** 2 + C1) * (vx + vy + C2)))
    return float(np.mean(vals))


def test_ssim_identity(rng):
    x = rng.uniform(size=(3, 16, 16))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_closed_form():
    a, b = np.full((3, 16, 16), 0.5), np.full((3, 16, 16), 0.4)
    expect = (2 * 0.5 * 0.4 + C1) / (0.25 + 0.16 + C1)
    assert ssim(a, b) == pytest.approx(expect, rel=1e-12)
    assert ssim(a, b) == pytest.approx(0.9756, abs=1e-4)


def test_ssim_matches_naive(rng):
    a, b = rng.uniform(size=(2, 14, 15)), rng.uniform(size=(2, 14, 15))
    assert ssim(a, b) == pytest.approx(naive_ssim(a, b), rel=1e-10)
    assert ssim(a, b, win_size=5, sigma=1.0) == pytest.approx(naive_ssim(a, b, 5, 1.0), rel=1e-10)


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_ssim_symmetric_and_bounded(seed):
    r = np.random.default_rng(seed)
    a, b = r.uniform(size=(1, 12, 12)), r.uniform(size=(1, 12, 12))
    s = ssim(a, b)
    assert s == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1 <= s <= 1


def test_ssim_window_too_large():
    with pytest.raises(ConfigurationError):
        ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))


def test_ssim_gradient(rng):
    a, b = rng.uniform(size=(2, 1, 9, 10)), rng.uniform(size=(2, 1, 9, 10))
    _, g = ssim_and_grad(a, b, win_size=5)
    num = numeric_grad(lambda: float(ssim(a, b, win_size=5).sum()), a)
    assert rel_err(g, num) < 1e-4


def test_tv_examples():
    assert tv(np.zeros((3, 4, 4))) == 0.0
    x = np.zeros((1, 2, 2))
    x[0, :, 1] = 1.0
    # horizontal diffs all 1; vertical diffs all 0
    assert tv(x) == 1.0
    y = np.tile(np.arange(5.0), (1, 3, 1))
    assert tv(y) == pytest.approx(1.0)


def test_tv_gradient(rng):
    x = rng.uniform(size=(2, 2, 5, 6))
    _, g = tv_and_grad(x)
    num = numeric_grad(lambda: float(tv(x).sum()), x)
    assert rel_err(g, num) < 1e-4


def test_loss_constant_example():
    pred, target = np.full((3, 16, 16), 0.5), np.full((3, 16, 16), 0.4)
    value, _ = loss_and_grad(pred, target, tv_weight=0.0)
    assert value == pytest.approx(0.7 * 0.1 + 0.3 * (1 - 0.9756), abs=1e-4)
    assert value == pytest.approx(0.0773, abs=1e-4)


def test_loss_zero_at_target_without_tv(rng):
    t = rng.uniform(size=(2, 3, 12, 12))
    assert loss_and_grad(t, t, tv_weight=0.0)[0] == pytest.approx(0.0, abs=1e-12)


def test_loss_gradient(rng):
    pred = rng.uniform(0.1, 0.9, size=(2, 3, 7, 8))
    target = rng.uniform(size=(2, 3, 7, 8))
    _, g = loss_and_grad(pred, target, win_size=3)
    num = numeric_grad(lambda: loss_and_grad(pred, target, win_size=3)[0], pred)
    assert rel_err(g, num) < 1e-4


def test_loss_is_batch_mean(rng):
    p, t = rng.uniform(size=(4, 3, 12, 12)), rng.uniform(size=(4, 3, 12, 12))
    per = [loss_and_grad(p[i], t[i])[0] for i in range(4)]
    assert loss_and_grad(p, t)[0] == pytest.approx(np.mean(per), rel=1e-12)
