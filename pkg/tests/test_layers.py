import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gradcheck import layer_errors
from wpcn_relay.neural.layers import (
    AdaptiveAvgPool2D,
    BatchNorm,
    Conv2D,
    Dense,
    Flatten,
    InceptionBlock,
    MaxPool2D,
    ReLU,
    _adaptive_matrix,
    inception_widths,
)

TOL = 1e-4


def naive_conv(x, w, b):
    """Direct 'same' convolution with the top/left-heavy padding split."""
    bsz, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    pt, pl = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pt, kh - 1 - pt), (pl, kw - 1 - pl)))
    y = np.zeros((bsz, o, h, wd))
    for r in range(h):
        for s in range(wd):
            patch = xp[:, :, r : r + kh, s : s + kw]
            y[:, :, r, s] = np.einsum("bcij,ocij->bo", patch, w) + b
    return y


class TestConv:
    @pytest.mark.parametrize("kernel", [(1, 1), (2, 2), (3, 2), (3, 3), (4, 4), (5, 4)])
    def test_forward_matches_naive(self, rng, kernel):
        layer = Conv2D(3, 5, kernel, rng)
        x = rng.normal(size=(2, 3, 4, 4))
        assert_allclose(layer.forward(x), naive_conv(x, *layer.params), atol=1e-12)

    @pytest.mark.parametrize("kernel", [(1, 1), (2, 2), (4, 4), (3, 2)])
    def test_gradients(self, rng, kernel):
        layer = Conv2D(2, 3, kernel, rng)
        assert max(layer_errors(layer, rng.normal(size=(2, 2, 4, 3)), rng)) < TOL

    def test_param_count(self):
        layer = Conv2D(1, 16, (2, 2))
        assert sum(p.size for p in layer.params) == 80

    def test_zero_weights_give_zero(self, rng):
        layer = Conv2D(2, 3, (3, 3), zero_init=True)
        assert_array_equal(layer.forward(rng.normal(size=(2, 2, 4, 4))), 0.0)


class TestDense:
    def test_param_count(self):
        assert sum(p.size for p in Dense(4, 10).params) == 50

    def test_gradients(self, rng):
        assert max(layer_errors(Dense(5, 3, rng), rng.normal(size=(4, 5)), rng)) < TOL


class TestBatchNorm:
    def test_train_mode_standardizes(self, rng):
        bn = BatchNorm(3)
        y = bn.forward(rng.normal(2.0, 3.0, size=(64, 3, 2, 2)), training=True)
        assert_allclose(y.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
        assert_allclose(y.var(axis=(0, 2, 3)), 1.0, rtol=1e-4)

    def test_running_stats(self, rng):
        bn = BatchNorm(2)
        x = rng.normal(1.0, 2.0, size=(50, 2))
        bn.forward(x, training=True)
        assert_allclose(bn.running_mean, 0.1 * x.mean(axis=0))
        assert_allclose(bn.running_var, 0.9 + 0.1 * x.var(axis=0, ddof=1))

    def test_infer_mode_uses_running_stats(self, rng):
        bn = BatchNorm(2)
        x = rng.normal(size=(5, 2))
        assert_allclose(bn.forward(x), x / np.sqrt(1 + 1e-5))

    @pytest.mark.parametrize("shape", [(6, 3), (4, 2, 3, 3)])
    @pytest.mark.parametrize("training", [True, False])
    def test_gradients(self, rng, shape, training):
        bn = BatchNorm(shape[1])
        bn.params[0][:] = rng.normal(size=shape[1])
        bn.params[1][:] = rng.normal(size=shape[1])
        assert max(layer_errors(bn, rng.normal(size=shape), rng, training)) < TOL


class TestPointwise:
    def test_relu_gradients(self, rng):
        x = rng.normal(size=(3, 4))
        x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
        assert max(layer_errors(ReLU(), x, rng)) < TOL

    def test_flatten_round_trip(self, rng):
        f = Flatten()
        x = rng.normal(size=(2, 3, 4, 4))
        assert f.forward(x).shape == (2, 48)
        assert f.backward(f.forward(x)).shape == x.shape


class TestPooling:
    def test_maxpool_same_shape(self, rng):
        x = rng.normal(size=(2, 3, 4, 4))
        y = MaxPool2D().forward(x)
        assert y.shape == x.shape and np.all(y >= x)

    def test_maxpool_values(self):
        x = np.arange(16.0).reshape(1, 1, 4, 4)
        y = MaxPool2D().forward(x)
        assert y[0, 0, 0, 0] == 5.0 and y[0, 0, 3, 3] == 15.0

    def test_maxpool_gradients(self, rng):
        assert max(layer_errors(MaxPool2D(), rng.normal(size=(2, 2, 4, 3)), rng)) < TOL

    @pytest.mark.parametrize("n_in, n_out", [(4, 3), (3, 5), (6, 6), (2, 1)])
    def test_adaptive_rows_average(self, n_in, n_out):
        m = _adaptive_matrix(n_in, n_out)
        assert_allclose(m.sum(axis=1), 1.0)
        assert np.all((m > 0).sum(axis=0) >= 1)

    def test_adaptive_constant(self):
        y = AdaptiveAvgPool2D((3, 5)).forward(np.full((2, 1, 4, 4), 2.5))
        assert y.shape == (2, 1, 3, 5)
        assert_allclose(y, 2.5)

    def test_adaptive_gradients(self, rng):
        assert max(layer_errors(AdaptiveAvgPool2D((3, 2)), rng.normal(size=(2, 2, 4, 4)), rng)) < TOL


class TestInception:
    def test_widths(self):
        assert inception_widths(64) == [16, 16, 16, 16]
        assert inception_widths(10) == [3, 3, 2, 2]
        assert inception_widths(2) == [1, 1, 0, 0]

    def test_output_channels(self, rng):
        block = InceptionBlock(3, 10, (4, 4), (3, 2), rng)
        assert block.forward(rng.normal(size=(2, 3, 4, 4))).shape == (2, 10, 4, 4)

    def test_gradients(self, rng):
        block = InceptionBlock(2, 6, (2, 2), (3, 3), rng)
        assert max(layer_errors(block, rng.normal(size=(2, 2, 3, 4)), rng)) < TOL
