import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psnerv.errors import ConfigurationError, DimensionError
from psnerv.patchgrid import GridConfig, Patch, crop, pad_to_multiple, split, split_array, stitch


def test_n1_single_patch(rng):
    f = rng.random((3, 6, 8))
    ps = split(f, GridConfig(1, 6, 8))
    assert len(ps) == 1 and np.array_equal(ps[0].pixels, f)


def test_1080p_sixteen_patches():
    g = GridConfig(4, 1080, 1920)
    assert g.n_patches == 16
    assert (g.patch_h, g.patch_w) == (270, 480)


def test_non_divisible_rejected_with_hint():
    with pytest.raises(ConfigurationError, match="pad"):
        GridConfig(2, 5, 5)


def test_zero_patches_give_zero_frame():
    g = GridConfig(2, 4, 6)
    f = stitch([Patch(np.zeros((3, 2, 3))) for _ in range(4)], g)
    assert f.shape == (3, 4, 6) and not f.any()


def test_checkerboard_layout():
    g = GridConfig(3, 6, 9)
    patches = [Patch(np.full((3, 2, 3), float(p))) for p in range(9)]
    f = stitch(patches, g)
    expect = np.zeros((3, 6, 9))
    for p in range(9):
        r, c = p // 3, p % 3
        expect[:, r * 2:(r + 1) * 2, c * 3:(c + 1) * 3] = p
    np.testing.assert_array_equal(f, expect)


def test_wrong_count_or_size():
    g = GridConfig(2, 4, 4)
    with pytest.raises(DimensionError):
        stitch([Patch(np.zeros((3, 2, 2)))] * 3, g)
    with pytest.raises(DimensionError):
        stitch([Patch(np.zeros((3, 3, 2)))] * 4, g)


@given(st.sampled_from([1, 2, 4, 8]), st.integers(1, 4), st.integers(1, 4), st.integers(0, 3))
@settings(max_examples=40, deadline=None)
def test_roundtrip_bit_exact(n, mh, mw, seed):
    g = GridConfig(n, n * mh, n * mw)
    f = np.random.default_rng(seed).random((3, g.H, g.W)).astype(np.float32)
    assert np.array_equal(stitch(split(f, g), g), f)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_top_left_pixel_exhaustive(n):
    g = GridConfig(n, 2 * n, 3 * n)
    f = np.arange(3 * g.H * g.W, dtype=np.float64).reshape(3, g.H, g.W)
    for p, patch in enumerate(split(f, g)):
        r, c = g.origin(p)
        assert (r, c) == ((p // n) * g.H // n, (p % n) * g.W // n)
        assert patch.pixels[0, 0, 0] == f[0, r, c]
        assert patch.p_index == p


def test_batched_split_matches_per_frame(rng):
    v = rng.random((3, 3, 4, 4))
    g = GridConfig(2, 4, 4)
    a = split_array(v, g)
    for t in range(3):
        for p, patch in enumerate(split(v[t], g)):
            np.testing.assert_array_equal(a[t, p], patch.pixels)


def test_pad_and_crop(rng):
    f = rng.random((3, 5, 7))
    padded, size = pad_to_multiple(f, 4)
    assert padded.shape == (3, 8, 8)
    assert np.array_equal(crop(padded, size), f)
    assert np.array_equal(padded[:, 5:, :7], np.repeat(f[:, 4:5], 3, axis=1))
