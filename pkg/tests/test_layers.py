"""Layer-level oracles: convolution, batchnorm, dropout, Adam."""

import numpy as np
import pytest

from poselift.errors import ValidationError
from poselift.lifter.layers import (
    BatchNorm1d,
    Conv1d,
    Dropout,
    ReLU,
    conv1d_backward,
    conv1d_forward,
    dropout,
)
from poselift.lifter.train import Adam, adam_step


class TestConvForward:
    def test_hand_convolution(self):
        # [1,2,3,4] * [1,0,-1] -> [1-3, 2-4] = [-2,-2]
        x = np.array([[1.0, 2.0, 3.0, 4.0]])
        kernel = np.array([[[1.0, 0.0, -1.0]]])
        out = conv1d_forward(x, kernel, np.zeros(1), dilation=1)
        np.testing.assert_array_equal(out, [[-2.0, -2.0]])

    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 10))
        kernel = np.eye(3)[:, :, None]
        out = conv1d_forward(x, kernel, np.zeros(3))
        np.testing.assert_array_equal(out, x)

    def test_output_length_with_dilation(self):
        x = np.zeros((1, 81))
        kernel = np.zeros((4, 1, 3))
        out = conv1d_forward(x, kernel, np.zeros(4), dilation=27)
        assert out.shape == (4, 27)  # 81 - 2*27

    def test_bias_added(self):
        x = np.zeros((1, 5))
        kernel = np.zeros((2, 1, 1))
        out = conv1d_forward(x, kernel, np.array([1.5, -2.0]))
        np.testing.assert_array_equal(out[0], np.full(5, 1.5))
        np.testing.assert_array_equal(out[1], np.full(5, -2.0))

    def test_batched_matches_loop(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 3, 20))
        kernel = rng.normal(size=(5, 3, 3))
        bias = rng.normal(size=5)
        out = conv1d_forward(x, kernel, bias, dilation=2)
        for n in range(4):
            np.testing.assert_array_equal(out[n], conv1d_forward(x[n], kernel, bias, 2))

    def test_window_too_short(self):
        with pytest.raises(ValidationError):
            conv1d_forward(np.zeros((1, 4)), np.zeros((1, 1, 3)), np.zeros(1), dilation=2)

    def test_channel_mismatch(self):
        with pytest.raises(ValidationError):
            conv1d_forward(np.zeros((2, 10)), np.zeros((1, 3, 3)), np.zeros(1))


class TestConvBackward:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 3, 12))
        kernel = rng.normal(size=(4, 3, 3))
        bias = rng.normal(size=4)
        grad_out = rng.normal(size=(2, 4, 8))

        gx, gk, gb = conv1d_backward(x, kernel, grad_out, dilation=2)

        def loss(xx, kk, bb):
            return float(np.sum(conv1d_forward(xx, kk, bb, 2) * grad_out))

        h = 1e-6
        for arr, grad in ((x, gx), (kernel, gk), (bias, gb)):
            idx = [np.unravel_index(i, arr.shape)
                   for i in rng.choice(arr.size, size=min(20, arr.size), replace=False)]
            for ix in idx:
                orig = arr[ix]
                arr[ix] = orig + h
                hi = loss(x, kernel, bias)
                arr[ix] = orig - h
                lo = loss(x, kernel, bias)
                arr[ix] = orig
                fd = (hi - lo) / (2 * h)
                assert abs(fd - grad[ix]) < 1e-4 * max(1.0, abs(fd))


class TestBatchNorm:
    def test_eval_identity_with_unit_stats(self):
        bn = BatchNorm1d(3)
        x = np.random.default_rng(3).normal(size=(4, 3, 7))
        out = bn.forward(x, train=False)
        np.testing.assert_allclose(out, x, rtol=0, atol=1e-5 * np.abs(x).max())

    def test_train_constant_input_gives_shift(self):
        bn = BatchNorm1d(2)
        bn.beta = np.array([1.0, -4.0])
        x = np.zeros((3, 2, 5))
        x[:, 0] += 7.0
        x[:, 1] -= 2.0
        out = bn.forward(x, train=True)
        np.testing.assert_allclose(out[:, 0], 1.0, atol=1e-12)
        np.testing.assert_allclose(out[:, 1], -4.0, atol=1e-12)

    def test_train_normalizes_and_applies_affine(self):
        # one channel, samples [-1, 1]: mean 0, var 1; scale 2, shift 1 -> [-1, 3]
        bn = BatchNorm1d(1)
        bn.gamma = np.array([2.0])
        bn.beta = np.array([1.0])
        x = np.array([-1.0, 1.0]).reshape(2, 1, 1)
        out = bn.forward(x, train=True)
        np.testing.assert_allclose(out.ravel(), [-1.0, 3.0], atol=1e-3)

    def test_running_stats_update(self):
        bn = BatchNorm1d(1, momentum=0.1)
        x = np.array([0.0, 4.0]).reshape(2, 1, 1)
        bn.forward(x, train=True)
        # mean 2, biased var 4; running = 0.9*init + 0.1*batch
        np.testing.assert_allclose(bn.running_mean, [0.2], atol=1e-12)
        np.testing.assert_allclose(bn.running_var, [0.9 * 1.0 + 0.1 * 4.0], atol=1e-12)

    def test_train_needs_two_samples(self):
        bn = BatchNorm1d(1)
        with pytest.raises(ValidationError):
            bn.forward(np.zeros((1, 1, 1)), train=True)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 2, 5))
        grad_out = rng.normal(size=(3, 2, 5))

        def loss(xx):
            bn = BatchNorm1d(2)
            bn.gamma = np.array([1.3, 0.7])
            bn.beta = np.array([0.1, -0.2])
            return float(np.sum(bn.forward(xx, train=True) * grad_out))

        bn = BatchNorm1d(2)
        bn.gamma = np.array([1.3, 0.7])
        bn.beta = np.array([0.1, -0.2])
        bn.forward(x, train=True)
        gx = bn.backward(grad_out)

        h = 1e-6
        for ix in [np.unravel_index(i, x.shape) for i in rng.choice(x.size, 15, replace=False)]:
            orig = x[ix]
            x[ix] = orig + h
            hi = loss(x)
            x[ix] = orig - h
            lo = loss(x)
            x[ix] = orig
            fd = (hi - lo) / (2 * h)
            assert abs(fd - gx[ix]) < 1e-4 * max(1.0, abs(fd))


class TestDropout:
    def test_rate_zero_identity(self):
        x = np.random.default_rng(5).normal(size=(3, 4))
        rng = np.random.default_rng(0)
        np.testing.assert_array_equal(dropout(x, 0.0, rng, train=True), x)

    def test_eval_identity(self):
        x = np.random.default_rng(6).normal(size=(3, 4))
        np.testing.assert_array_equal(dropout(x, 0.9, None, train=False), x)

    def test_zero_fraction_and_survivor_scale(self):
        rng = np.random.default_rng(7)
        x = np.ones((1000, 1000))
        out = dropout(x, 0.25, rng, train=True)
        zero_frac = float(np.mean(out == 0.0))
        assert abs(zero_frac - 0.25) < 0.005
        survivors = out[out != 0.0]
        np.testing.assert_array_equal(survivors, np.full(survivors.shape, 1.0 / 0.75))

    def test_expectation_preserved(self):
        # inverted dropout keeps E[out] = x within 3 sigma
        rng = np.random.default_rng(8)
        n = 200_000
        x = np.full(n, 2.0)
        out = dropout(x, 0.25, rng, train=True)
        sigma = 2.0 * np.sqrt(0.25 / 0.75 / n)  # std of the masked mean
        assert abs(out.mean() - 2.0) < 3 * sigma

    def test_invalid_rate(self):
        with pytest.raises(ValidationError):
            dropout(np.zeros(3), 1.0, np.random.default_rng(0), True)

    def test_layer_mask_reuse(self):
        layer = Dropout(0.5)
        rng = np.random.default_rng(9)
        x = np.ones((4, 6))
        first = layer.forward(x, train=True, rng=rng)
        second = layer.forward(x, train=True, reuse_mask=True)
        np.testing.assert_array_equal(first, second)

    def test_layer_reuse_without_mask_rejected(self):
        layer = Dropout(0.5)
        with pytest.raises(ValidationError):
            layer.forward(np.ones((2, 2)), train=True, reuse_mask=True)

    def test_backward_uses_mask(self):
        layer = Dropout(0.5)
        rng = np.random.default_rng(10)
        x = np.ones((50, 50))
        out = layer.forward(x, train=True, rng=rng)
        grad = layer.backward(np.ones_like(x))
        np.testing.assert_array_equal(grad, out)  # same mask, same scaling


class TestReLU:
    def test_forward_and_backward(self):
        relu = ReLU()
        x = np.array([-2.0, 0.0, 3.0])
        np.testing.assert_array_equal(relu.forward(x), [0.0, 0.0, 3.0])
        np.testing.assert_array_equal(relu.backward(np.ones(3)), [0.0, 0.0, 1.0])


class TestAdam:
    def test_zero_grad_is_noop(self):
        p = np.array([1.0, -2.0])
        opt = Adam([p], lr=0.1)
        opt.step([p], [np.zeros(2)])
        np.testing.assert_array_equal(p, [1.0, -2.0])

    def test_first_step_magnitude_close_to_lr(self):
        # with bias correction the first update is lr * g/|g| up to eps
        p = np.array([0.0])
        opt = Adam([p], lr=0.01)
        opt.step([p], [np.array([123.0])])
        assert abs(abs(p[0]) - 0.01) < 1e-5

    def test_equal_grads_equal_updates(self):
        a = np.array([5.0])
        b = np.array([-3.0])
        opt = Adam([a, b], lr=0.05)
        for _ in range(4):
            opt.step([a, b], [np.array([2.0]), np.array([2.0])])
        assert (a[0] - 5.0) == (b[0] - (-3.0))

    def test_adam_step_sets_learning_rate(self):
        p = np.array([0.0])
        opt = Adam([p], lr=999.0)
        adam_step([p], [np.array([1.0])], opt, lr=0.5)
        assert abs(abs(p[0]) - 0.5) < 1e-4
