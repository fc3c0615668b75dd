"""Tensor, tape and differentiable op tests."""

import threading

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from autodiff import (BatchNormState, Tape, Tensor, add, backward, batch_norm, concat_channels,
                      conv2d, dropout, gather_channels, log, max_pool2, mul, no_grad, relu,
                      slice_channels, softmax_channels, up_conv2, zero_grad)
from autodiff import ops
from autodiff.tensor import is_grad_enabled
from loss import weighted_cross_entropy
from utils.errors import ConfigError, LabelIndexError, NumericalError, ShapeError, UsageError

SEEDS = range(20)
GRAD_TOLERANCE = 1e-4


def t4(values):
    """Wrap a 2-D list as a 1×1×H×W tensor."""
    return Tensor(np.asarray(values, dtype=np.float64)[None, None])


class TestTensor:

    def test_from_flat_checks_product(self):
        t = Tensor.from_flat([2, 3], range(6))
        assert t.shape == (2, 3)
        with pytest.raises(ShapeError) as exc:
            Tensor.from_flat([2, 3], range(5))
        assert exc.value.dimension == 'data'

    def test_data_is_read_only(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.data[0] = 5.0

    def test_check_finite(self):
        Tensor([1.0]).check_finite()
        with pytest.raises(NumericalError):
            Tensor([1.0, np.nan]).check_finite('activations')

    def test_assign_keeps_shape(self):
        t = Tensor(np.zeros(3), requires_grad=True)
        t.assign(np.ones(3))
        assert_array_equal(t.data, np.ones(3))
        with pytest.raises(ShapeError):
            t.assign(np.ones(4))


class TestConv2d:

    def test_identity_kernel(self):
        out = conv2d(t4([[2.0]]), Tensor(np.ones((1, 1, 1, 1))), Tensor([0.0]))
        assert_array_equal(out.data, [[[[2.0]]]])

    def test_zero_kernel(self, rng):
        x = Tensor(rng.normal(size=(2, 3, 5, 5)))
        out = conv2d(x, Tensor(np.zeros((4, 3, 3, 3))), Tensor(np.zeros(4)))
        assert_array_equal(out.data, np.zeros((2, 4, 5, 5)))

    def test_ones_same_padding(self):
        out = conv2d(t4(np.ones((3, 3))), Tensor(np.ones((1, 1, 3, 3))))
        assert_array_equal(out.data[0, 0], [[4, 6, 4], [6, 9, 6], [4, 6, 4]])

    def test_matches_direct_summation(self, rng):
        x = rng.normal(size=(2, 3, 6, 5))
        k = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        out = conv2d(Tensor(x), Tensor(k), Tensor(b)).data
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        expected = np.zeros((2, 4, 6, 5))
        for n in range(2):
            for o in range(4):
                for y in range(6):
                    for xx in range(5):
                        expected[n, o, y, xx] = (padded[n, :, y:y + 3, xx:xx + 3] * k[o]).sum() + b[o]
        assert_allclose(out, expected, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize('size', [1, 3, 5])
    def test_same_padding_keeps_spatial_shape(self, rng, size):
        x = Tensor(rng.normal(size=(1, 2, 7, 6)))
        out = conv2d(x, Tensor(rng.normal(size=(3, 2, size, size))))
        assert out.shape == (1, 3, 7, 6)

    def test_valid_padding_shrinks(self, rng):
        out = conv2d(Tensor(rng.normal(size=(1, 1, 6, 6))), Tensor(rng.normal(size=(1, 1, 3, 3))), padding='valid')
        assert out.shape == (1, 1, 4, 4)

    def test_shape_errors_name_dimension(self, rng):
        x = Tensor(rng.normal(size=(1, 2, 4, 4)))
        with pytest.raises(ShapeError) as exc:
            conv2d(x, Tensor(np.zeros((1, 3, 3, 3))))
        assert exc.value.dimension == 'Cin'
        with pytest.raises(ShapeError) as exc:
            conv2d(x, Tensor(np.zeros((1, 2, 2, 2))))
        assert exc.value.dimension == 'Kh'

    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradient_same(self, gradcheck, seed):
        r = np.random.default_rng(seed)
        inputs = [r.normal(size=(2, 3, 6, 6)), r.normal(size=(2, 3, 3, 3)), r.normal(size=2)]
        assert gradcheck(lambda x, k, b: conv2d(x, k, b), inputs, seed) < GRAD_TOLERANCE

    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradient_valid(self, gradcheck, seed):
        r = np.random.default_rng(seed)
        inputs = [r.normal(size=(2, 2, 6, 6)), r.normal(size=(3, 2, 3, 3))]
        assert gradcheck(lambda x, k: conv2d(x, k, padding='valid'), inputs, seed) < GRAD_TOLERANCE


class TestMaxPool:

    def test_single_window(self):
        assert_array_equal(max_pool2(t4([[1, 2], [3, 4]])).data, [[[[4]]]])

    def test_constant(self):
        assert_array_equal(max_pool2(t4(np.full((4, 6), 2.5))).data, np.full((1, 1, 2, 3), 2.5))

    def test_ascending(self):
        out = max_pool2(t4(np.arange(1, 17).reshape(4, 4)))
        assert_array_equal(out.data[0, 0], [[6, 8], [14, 16]])

    def test_odd_extent_rejected(self):
        with pytest.raises(ShapeError) as exc:
            max_pool2(t4(np.zeros((3, 4))))
        assert exc.value.dimension == 'H'

    def test_tie_routes_to_first(self):
        x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
        backward(ops.sum_all(max_pool2(x)))
        assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])

    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradient(self, gradcheck, seed):
        r = np.random.default_rng(seed)
        assert gradcheck(max_pool2, [r.normal(size=(2, 3, 6, 6))], seed) < GRAD_TOLERANCE


class TestUpConv:

    def test_single_pixel(self):
        k = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = up_conv2(t4([[2.0]]), Tensor(k[None, None]))
        assert_array_equal(out.data[0, 0], 2.0 * k)

    def test_zero_input_gives_bias(self):
        out = up_conv2(Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.ones((2, 1, 2, 2))), Tensor([0.5]))
        assert_array_equal(out.data, np.full((1, 1, 6, 6), 0.5))

    def test_tiles(self):
        out = up_conv2(t4([[1, 2], [3, 4]]), Tensor(np.ones((1, 1, 2, 2))))
        assert_array_equal(out.data[0, 0], [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]])

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            up_conv2(Tensor(np.zeros((1, 4, 2, 2))), Tensor(np.zeros((3, 2, 2, 2))))

    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradient(self, gradcheck, seed):
        r = np.random.default_rng(seed)
        inputs = [r.normal(size=(2, 2, 3, 3)), r.normal(size=(2, 1, 2, 2)), r.normal(size=1)]
        assert gradcheck(lambda x, k, b: up_conv2(x, k, b), inputs, seed) < GRAD_TOLERANCE


class TestBatchNorm:

    def test_constant_channel_gives_beta(self):
        x = Tensor(np.full((2, 1, 3, 3), 7.0))
        out = batch_norm(x, Tensor([3.0]), Tensor([0.25]), 'train', BatchNormState())
        assert_allclose(out.data, 0.25, atol=1e-12)

    def test_standardized_input_unchanged(self, rng):
        x = rng.normal(size=(4, 2, 8, 8))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
        out = batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), 'train', BatchNormState())
        assert_allclose(out.data, x, atol=1e-4)

    def test_two_values(self):
        x = Tensor(np.array([0.0, 2.0]).reshape(1, 1, 1, 2))
        out = batch_norm(x, Tensor([1.0]), Tensor([0.0]), 'train', BatchNormState())
        assert_allclose(out.data.ravel(), [-1.0, 1.0], atol=1e-4)

    def test_running_statistics(self):
        state = BatchNormState.fresh(1)
        x = Tensor(np.array([0.0, 2.0]).reshape(1, 1, 1, 2))
        batch_norm(x, Tensor([1.0]), Tensor([0.0]), 'train', state)
        # unbiased variance of {0, 2} is 2
        assert_allclose(state.running_mean, [0.1])
        assert_allclose(state.running_var, [0.9 + 0.1 * 2.0])

    def test_eval_uses_running_statistics(self):
        state = BatchNormState(np.array([1.0]), np.array([4.0]))
        out = batch_norm(t4([[5.0]]), Tensor([1.0]), Tensor([0.0]), 'eval', state)
        assert_allclose(out.data.ravel(), [4.0 / np.sqrt(4.0 + 1e-5)])

    def test_eval_needs_initialized_state(self):
        with pytest.raises(UsageError):
            batch_norm(t4([[1.0]]), Tensor([1.0]), Tensor([0.0]), 'eval', BatchNormState())

    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradient_train(self, gradcheck, seed):
        r = np.random.default_rng(seed)
        inputs = [r.normal(size=(2, 3, 6, 6)), r.uniform(0.5, 1.5, size=3), r.normal(size=3)]

        def op(x, gamma, beta):
            return batch_norm(x, gamma, beta, 'train', BatchNormState())

        assert gradcheck(op, inputs, seed) < GRAD_TOLERANCE


class TestElementwise:

    def test_relu_values(self):
        out = relu(Tensor([-1.0, 2.0, 0.0]))
        assert_array_equal(out.data, [0.0, 2.0, 0.0])

    def test_relu_gradient_at_zero(self):
        x = Tensor([0.0], requires_grad=True)
        backward(ops.sum_all(relu(x)))
        assert_array_equal(x.grad, [0.0])

    @pytest.mark.parametrize('seed', SEEDS)
    def test_relu_gradient_off_kink(self, gradcheck, seed):
        r = np.random.default_rng(seed)
        x = r.normal(size=(2, 3, 6, 6))
        x[np.abs(x) < 1e-3] = 0.5
        assert gradcheck(relu, [x], seed) < GRAD_TOLERANCE

    def test_log_floor_blocks_gradient(self):
        x = Tensor([0.0, 1.0], requires_grad=True)
        out = log(x, floor=1e-12)
        assert_allclose(out.data, [np.log(1e-12), 0.0])
        backward(ops.sum_all(out))
        assert_array_equal(x.grad, [0.0, 1.0])


class TestDropout:

    def test_rate_zero_is_identity(self, rng):
        x = Tensor(rng.normal(size=(2, 3)))
        assert dropout(x, 0.0, 'train', rng) is x

    def test_eval_is_identity(self, rng):
        x = Tensor(rng.normal(size=(2, 3)))
        assert dropout(x, 0.5, 'eval', None) is x

    def test_rate_one_rejected(self, rng):
        with pytest.raises(ConfigError):
            dropout(Tensor([1.0]), 1.0, 'train', rng)

    @pytest.mark.parametrize('seed', range(10))
    def test_mean_preserved(self, seed):
        size, rate = 20000, 0.25
        out = dropout(Tensor(np.ones(size)), rate, 'train', np.random.default_rng(seed)).data
        # survivors are 1/(1−rate); binomial σ of the sample mean
        sigma = np.sqrt(rate * (1 - rate) / size) / (1 - rate)
        assert abs(out.mean() - 1.0) < 3 * sigma
        assert set(np.unique(out)) <= {0.0, 1.0 / (1 - rate)}


class TestChannels:

    def test_concat_order(self):
        a, b = t4([[1.0]]), t4([[2.0]])
        assert_array_equal(concat_channels(a, b).data.ravel(), [1.0, 2.0])

    def test_concat_then_slice(self, rng):
        a = Tensor(rng.normal(size=(2, 2, 3, 3)))
        b = Tensor(rng.normal(size=(2, 3, 3, 3)))
        joined = concat_channels(a, b)
        assert_array_equal(slice_channels(joined, 0, 2).data, a.data)
        assert_array_equal(slice_channels(joined, 2, 5).data, b.data)

    def test_concat_backward_splits(self, rng):
        a = Tensor(rng.normal(size=(1, 2, 3, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(1, 1, 3, 3)), requires_grad=True)
        backward(ops.sum_all(concat_channels(a, b)))
        assert_array_equal(a.grad, np.ones(a.shape))
        assert_array_equal(b.grad, np.ones(b.shape))

    def test_concat_spatial_mismatch(self):
        with pytest.raises(ShapeError) as exc:
            concat_channels(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 2, 4))))
        assert exc.value.dimension == 'W'

    def test_softmax_equal_logits(self):
        out = softmax_channels(Tensor(np.zeros((1, 4, 1, 1))))
        assert_allclose(out.data.ravel(), [0.25] * 4)

    def test_softmax_ln3(self):
        out = softmax_channels(Tensor(np.array([0.0, np.log(3.0)]).reshape(1, 2, 1, 1)))
        assert_allclose(out.data.ravel(), [0.25, 0.75], atol=1e-12)

    def test_softmax_shift_invariance(self, rng):
        logits = rng.normal(size=(2, 3, 4, 4))
        assert_allclose(softmax_channels(Tensor(logits + 1000.0)).data,
                        softmax_channels(Tensor(logits)).data, atol=1e-9)

    def test_softmax_sums_to_one(self, rng):
        out = softmax_channels(Tensor(rng.normal(scale=30.0, size=(2, 5, 4, 4)))).data
        assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_gather_out_of_range_label(self):
        probs = Tensor(np.full((1, 2, 2, 2), 0.5))
        labels = np.zeros((1, 2, 2), dtype=np.int64)
        labels[0, 1, 0] = 2
        with pytest.raises(LabelIndexError) as exc:
            gather_channels(probs, labels)
        assert exc.value.pixel == (0, 1, 0)

    @pytest.mark.parametrize('seed', SEEDS)
    def test_softmax_cross_entropy_gradient(self, gradcheck, seed):
        r = np.random.default_rng(seed)
        labels = r.integers(0, 3, size=(2, 6, 6))
        weights = r.uniform(0.01, 1.0, size=(2, 6, 6))

        def op(logits):
            return weighted_cross_entropy(softmax_channels(logits), labels, weights)

        assert gradcheck(op, [r.normal(size=(2, 3, 6, 6))], seed) < GRAD_TOLERANCE


class TestBackward:

    def test_sum_gradient_is_ones(self, rng):
        x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        backward(ops.sum_all(x))
        assert_array_equal(x.grad, np.ones((2, 3)))

    def test_square(self):
        x = Tensor(3.0, requires_grad=True)
        backward(mul(x, x))
        assert_allclose(x.grad, 6.0)

    def test_non_scalar_rejected(self, rng):
        x = Tensor(rng.normal(size=3), requires_grad=True)
        with pytest.raises(UsageError):
            backward(mul(x, 2.0))

    def test_unreached_leaf_gets_zero(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        unused = Tensor([5.0], requires_grad=True)
        with Tape() as tape:
            mul(unused, 2.0)
            loss = ops.sum_all(mul(x, x))
        backward(loss, tape)
        assert_array_equal(unused.grad, [0.0])

    def test_branches_without_context_merge(self):
        x = Tensor([1.0, -2.0], requires_grad=True)
        y = Tensor([-3.0, 4.0], requires_grad=True)
        left, right = relu(x), relu(y)
        assert left.tape is not right.tape
        loss = ops.sum_all(add(left, right))
        backward(loss)
        assert_array_equal(x.grad, [1.0, 0.0])
        assert_array_equal(y.grad, [0.0, 1.0])
        assert left.tape is loss.tape and right.tape is loss.tape

    def test_merged_tape_still_replays(self):
        x = Tensor([2.0], requires_grad=True)
        first = mul(x, x)
        first_tape = first.tape
        loss = ops.sum_all(add(mul(x, 3.0), first))
        assert first.tape is loss.tape and first_tape is not loss.tape
        backward(loss, first_tape)
        assert_allclose(x.grad, [7.0])

    def test_branch_joins_explicit_tape(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        outside = mul(x, 2.0)
        with Tape() as tape:
            loss = ops.sum_all(add(outside, mul(x, x)))
        assert loss.tape is tape
        backward(loss)
        assert_array_equal(x.grad, [4.0, 6.0])

    def test_two_explicit_tapes_rejected(self):
        x = Tensor([1.0], requires_grad=True)
        with Tape():
            a = mul(x, 2.0)
        with Tape():
            b = mul(x, 3.0)
        with pytest.raises(UsageError):
            add(a, b)

    def test_repeated_backward_accumulates(self):
        x = Tensor([1.0, -2.0], requires_grad=True)
        for expected in ([2.0, -4.0], [4.0, -8.0]):
            backward(ops.sum_all(mul(x, x)))
            assert_array_equal(x.grad, expected)
        zero_grad([x])
        assert x.grad is None

    def test_deterministic_gradients(self):
        grads = []
        for _ in range(2):
            r = np.random.default_rng(5)
            x = Tensor(r.normal(size=(1, 2, 4, 4)), requires_grad=True)
            k = Tensor(r.normal(size=(3, 2, 3, 3)), requires_grad=True)
            backward(ops.sum_all(relu(conv2d(x, k))))
            grads.append((x.grad, k.grad))
        assert_array_equal(grads[0][0], grads[1][0])
        assert_array_equal(grads[0][1], grads[1][1])

    def test_no_grad_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        with Tape() as tape, no_grad():
            out = mul(x, x)
        assert len(tape) == 0
        assert not out.requires_grad
        assert is_grad_enabled()

    def test_no_grad_is_thread_local(self):
        seen = []
        with no_grad():
            worker = threading.Thread(target=lambda: seen.append(is_grad_enabled()))
            worker.start()
            worker.join()
        assert seen == [True]
