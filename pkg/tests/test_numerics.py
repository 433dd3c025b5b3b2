import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psnerv import numerics as nx
from psnerv.errors import ConfigurationError, DimensionError, UsageError

from conftest import numeric_grad, rel_err


def conv_oracle(x, k, b):
    """Direct sliding-window 3x3 correlation with zero padding."""
    B, C, H, W = x.shape
    O = k.shape[0]
    out = np.zeros((B, O, H, W))
    for bb in range(B):
        for o in range(O):
            for i in range(H):
                for j in range(W):
                    acc = b[o]
                    for c in range(C):
                        for u in range(3):
                            for v in range(3):
                                ii, jj = i + u - 1, j + v - 1
                                if 0 <= ii < H and 0 <= jj < W:
                                    acc += x[bb, c, ii, jj] * k[o, c, u, v]
                    out[bb, o, i, j] = acc
    return out


class TestLinear:
    def test_identity(self):
        y = nx.linear(np.array([[1.0, 2.0]]), np.eye(2), np.zeros(2))
        np.testing.assert_array_equal(y, [[1, 2]])

    def test_matrix_product(self):
        y = nx.linear(np.array([[1.0, 0], [0, 1]]), np.array([[3.0, 4], [5, 6]]), np.zeros(2))
        np.testing.assert_array_equal(y, [[3, 5], [4, 6]])

    def test_zero_input_passes_bias(self):
        y = nx.linear(np.zeros((3, 2)), np.ones((2, 2)), np.array([1.0, 1.0]))
        np.testing.assert_array_equal(y, np.ones((3, 2)))

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(1, 3\).*\(2, 2\)"):
            nx.linear(np.zeros((1, 3)), np.zeros((2, 2)), np.zeros(2))

    def test_sum_loss_weight_grad(self, rng):
        x = rng.normal(size=(4, 3))
        w = rng.normal(size=(2, 3))
        b = rng.normal(size=2)
        tape = nx.Tape()
        y = nx.linear(x, w, b, tape)
        g = nx.backward(tape, y, np.ones_like(y))
        np.testing.assert_allclose(g[w], np.tile(x.sum(axis=0), (2, 1)))


class TestConv:
    def test_delta_kernel_is_identity(self, rng):
        x = rng.normal(size=(2, 3, 5, 4))
        k = np.zeros((3, 3, 3, 3))
        for c in range(3):
            k[c, c, 1, 1] = 1
        np.testing.assert_array_equal(nx.conv2d(x, k, np.zeros(3)), x)

    def test_ones(self):
        y = nx.conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1))
        assert y[0, 0, 1, 1] == 9
        assert y[0, 0, 0, 0] == 4

    def test_bias_only(self, rng):
        y = nx.conv2d(rng.normal(size=(1, 2, 4, 4)), np.zeros((3, 2, 3, 3)), np.array([1.0, -2.0, 0.5]))
        for o, v in enumerate([1.0, -2.0, 0.5]):
            assert np.all(y[0, o] == v)

    def test_matches_sliding_window_oracle(self, rng):
        x = rng.normal(size=(2, 3, 4, 5))
        k = rng.normal(size=(2, 3, 3, 3))
        b = rng.normal(size=2)
        np.testing.assert_allclose(nx.conv2d(x, k, b), conv_oracle(x, k, b), atol=1e-12)

    def test_channels_last_agrees(self, rng):
        x = rng.normal(size=(2, 3, 4, 5))
        k = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        y = nx.conv2d(x.transpose(0, 2, 3, 1), k, b, channels_last=True)
        np.testing.assert_allclose(y.transpose(0, 3, 1, 2), nx.conv2d(x, k, b), atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            nx.conv2d(np.zeros((1, 2, 3, 3)), np.zeros((1, 3, 3, 3)), np.zeros(1))

    def test_kernel_must_be_3x3(self):
        with pytest.raises(ConfigurationError):
            nx.conv2d(np.zeros((1, 1, 3, 3)), np.zeros((1, 1, 5, 5)), np.zeros(1))

    @given(st.integers(1, 2), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
    @settings(max_examples=20, deadline=None)
    def test_delta_identity_property(self, b, c, h, w):
        x = np.random.default_rng(b * 100 + c * 10 + h + w).normal(size=(b, c, h, w))
        k = np.zeros((c, c, 3, 3))
        k[np.arange(c), np.arange(c), 1, 1] = 1
        np.testing.assert_array_equal(nx.conv2d(x, k, np.zeros(c)), x)


class TestPixelShuffle:
    def test_s1_identity(self, rng):
        x = rng.normal(size=(2, 3, 4, 4))
        np.testing.assert_array_equal(nx.pixel_shuffle(x, 1), x)

    def test_shape(self):
        assert nx.pixel_shuffle(np.zeros((1, 4, 2, 2)), 2).shape == (1, 1, 4, 4)

    def test_index_formula(self):
        x = np.arange(16.0).reshape(1, 4, 2, 2)
        y = nx.pixel_shuffle(x, 2)
        expect = np.zeros((1, 1, 4, 4))
        for c in range(1):
            for h in range(2):
                for w in range(2):
                    for u in range(2):
                        for v in range(2):
                            expect[0, c, h * 2 + u, w * 2 + v] = x[0, c * 4 + u * 2 + v, h, w]
        np.testing.assert_array_equal(y, expect)
        np.testing.assert_array_equal(y[0, 0], [[0, 4, 1, 5], [8, 12, 9, 13], [2, 6, 3, 7], [10, 14, 11, 15]])

    def test_not_divisible(self):
        with pytest.raises(ConfigurationError):
            nx.pixel_shuffle(np.zeros((1, 6, 2, 2)), 2)

    @given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.booleans())
    @settings(max_examples=40, deadline=None)
    def test_inverse_roundtrip_bit_exact(self, s, c, h, w, last):
        rng = np.random.default_rng(s + 7 * c + 13 * h + 29 * w)
        shape = (2, h, w, c * s * s) if last else (2, c * s * s, h, w)
        x = rng.normal(size=shape).astype(np.float32)
        y = nx.pixel_unshuffle(nx.pixel_shuffle(x, s, channels_last=last), s, channels_last=last)
        assert np.array_equal(x, y)
        assert sorted(x.ravel()) == sorted(nx.pixel_shuffle(x, s, channels_last=last).ravel())

    def test_backward_is_inverse_permutation(self, rng):
        x = rng.normal(size=(1, 8, 2, 3))
        tape = nx.Tape()
        y = nx.pixel_shuffle(x, 2, tape)
        dy = rng.normal(size=y.shape)
        np.testing.assert_array_equal(nx.backward(tape, y, dy)[x], nx.pixel_unshuffle(dy, 2))


class TestGelu:
    def test_values(self):
        assert nx.gelu(np.array(0.0)) == 0
        assert abs(nx.gelu(np.array(6.0)) - 6) < 1e-6
        assert abs(float(nx.gelu(np.array(1.0))) - 0.8412) < 1e-4

    def test_close_to_exact_erf_form(self):
        from scipy.special import erf
        x = np.linspace(-5, 5, 101)
        np.testing.assert_allclose(nx.gelu(x), x * 0.5 * (1 + erf(x / np.sqrt(2))), atol=1e-3)

    def test_monotone_for_nonnegative(self):
        y = nx.gelu(np.linspace(0, 10, 1001))
        assert np.all(np.diff(y) >= 0)


class TestChannelStats:
    def test_constant(self):
        m, v = nx.channel_stats(np.full((1, 2, 3, 3), 0.7))
        np.testing.assert_allclose(m, 0.7)
        np.testing.assert_allclose(v, 0, atol=1e-15)

    def test_two_values(self):
        x = np.array([0.0, 1.0, 0.0, 1.0]).reshape(1, 1, 2, 2)
        m, v = nx.channel_stats(x)
        assert m[0, 0] == 0.5 and v[0, 0] == 0.25

    def test_single_pixel(self):
        m, v = nx.channel_stats(np.array([[[[3.0]]]]))
        assert m[0, 0] == 3.0 and v[0, 0] == 0.0


class TestBackward:
    def test_before_forward(self):
        with pytest.raises(UsageError):
            nx.backward(nx.Tape(), np.zeros(2), np.zeros(2))

    def test_unrecorded_output(self):
        tape = nx.Tape()
        nx.gelu(np.zeros(3), tape)
        with pytest.raises(UsageError):
            nx.backward(tape, np.zeros(3), np.zeros(3))

    def test_zero_out_grad(self, rng):
        x = rng.normal(size=(2, 3))
        w = rng.normal(size=(4, 3))
        b = rng.normal(size=4)
        tape = nx.Tape()
        y = nx.gelu(nx.linear(x, w, b, tape), tape)
        g = nx.backward(tape, y, np.zeros_like(y))
        for a in (x, w, b):
            assert not np.any(g[a])


def _check_op(make, inputs, rng):
    out = make(*inputs)
    r = rng.normal(size=np.shape(out))

    def f():
        return float(np.sum(make(*inputs) * r))

    tape = nx.Tape()
    y = make(*inputs, tape=tape)
    g = nx.backward(tape, y, r)
    return max(rel_err(g[a], numeric_grad(f, a)) for a in inputs)


@pytest.mark.parametrize("last", [False, True])
def test_finite_differences_spatial_ops(rng, last):
    for trial in range(3):
        c = int(rng.integers(1, 5))
        o = int(rng.integers(1, 5))
        h, w = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        x = rng.normal(size=(2, h, w, c) if last else (2, c, h, w))
        k = rng.normal(size=(o * 4, c, 3, 3))
        b = rng.normal(size=o * 4)
        assert _check_op(lambda x, k, b, tape=None: nx.conv2d(x, k, b, tape, last), [x, k, b], rng) < 1e-4
        y = nx.conv2d(x, k, b, channels_last=last)
        assert _check_op(lambda y, tape=None: nx.pixel_shuffle(y, 2, tape, last), [y], rng) < 1e-4


def test_finite_differences_dense_ops(rng):
    x = rng.normal(size=(3, 5))
    w = rng.normal(size=(4, 5))
    b = rng.normal(size=4)
    assert _check_op(nx.linear, [x, w, b], rng) < 1e-4
    z = rng.normal(size=(3, 4, 2, 2)) * 2
    assert _check_op(nx.gelu, [z], rng) < 1e-4
    assert _check_op(nx.sigmoid, [z], rng) < 1e-4
    assert _check_op(lambda z, tape=None: nx.transpose(z, (0, 2, 3, 1), tape), [z], rng) < 1e-4
    assert _check_op(lambda x, tape=None: nx.take_columns(x, 1, 3, tape), [x], rng) < 1e-4


def test_fan_out_accumulates(rng):
    # gelu(x) feeds two take_columns nodes that are summed back together
    x = rng.normal(size=(2, 4))

    def run(tape=None):
        a = nx.gelu(x, tape)
        return nx.add(nx.take_columns(a, 0, 2, tape), nx.take_columns(a, 1, 3, tape), tape)

    tape = nx.Tape()
    out = run(tape)
    r = rng.normal(size=out.shape)
    g = nx.backward(tape, out, r)
    f = lambda: float(np.sum(run() * r))  # noqa: E731
    assert rel_err(g[x], numeric_grad(f, x)) < 1e-4


def test_float32_default_preserved(rng):
    x = rng.normal(size=(1, 2, 3, 3)).astype(np.float32)
    k = rng.normal(size=(2, 2, 3, 3)).astype(np.float32)
    assert nx.conv2d(x, k, np.zeros(2, np.float32)).dtype == np.float32
    assert nx.gelu(x).dtype == np.float32
