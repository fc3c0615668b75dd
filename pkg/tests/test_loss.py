"""Feedback weights and weighted cross-entropy."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from autodiff import Tape, Tensor, backward, softmax_channels
from autodiff import ops
from loss import LossConfig, feedback_weight, loss_step, true_class_prob, weighted_cross_entropy
from utils.errors import ConfigError, DomainError, ShapeError


def two_class_probs(p_true):
    """1×2×1×P probabilities whose class-0 probability is p_true per pixel."""
    p = np.asarray(p_true, dtype=np.float64)
    return Tensor(np.stack([p, 1.0 - p])[None, :, None, :])


class TestFeedbackWeight:

    @pytest.mark.parametrize('beta', [1, 2, 3, 4])
    def test_endpoints(self, beta):
        assert feedback_weight(0.0, beta) == 1.0
        assert abs(feedback_weight(1.0, beta) - 0.01) < 1e-12

    def test_midpoint(self):
        assert abs(feedback_weight(0.5, 3.0) - 100 ** (-1 / 8)) < 1e-9
        assert abs(feedback_weight(0.5, 3.0) - 0.562341) < 1e-6

    def test_monotone_in_p(self):
        w = feedback_weight(np.linspace(0, 1, 101), 3.0)
        assert np.all(np.diff(w) < 0)

    def test_larger_beta_keeps_weights_high(self):
        assert feedback_weight(0.5, 4.0) > feedback_weight(0.5, 1.0)

    @pytest.mark.parametrize('p', [-0.1, 1.5, float('nan')])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            feedback_weight(p, 3.0)

    def test_invalid_beta(self):
        with pytest.raises(ConfigError):
            feedback_weight(0.5, 0.0)
        with pytest.raises(ConfigError):
            LossConfig(mode='feedback', beta=-1.0)

    def test_invalid_mode(self):
        with pytest.raises(ConfigError) as exc:
            LossConfig(mode='focal')
        assert exc.value.key == 'loss_mode'


class TestTrueClassProb:

    def test_pick(self):
        probs = Tensor(np.array([0.2, 0.8]).reshape(1, 2, 1, 1))
        assert_allclose(true_class_prob(probs, np.ones((1, 1, 1), dtype=int)).data, [[[0.8]]])

    def test_one_hot(self, rng):
        labels = rng.integers(0, 3, size=(2, 4, 4))
        one_hot = np.eye(3)[labels].transpose(0, 3, 1, 2)
        assert_array_equal(true_class_prob(Tensor(one_hot), labels).data, np.ones((2, 4, 4)))

    @pytest.mark.parametrize('seed', range(5))
    def test_gradient_through_softmax(self, gradcheck, seed):
        r = np.random.default_rng(seed)
        labels = r.integers(0, 3, size=(2, 4, 4))

        def op(logits):
            return ops.sum_all(true_class_prob(softmax_channels(logits), labels))

        assert gradcheck(op, [r.normal(size=(2, 3, 4, 4))], seed) < 1e-4


class TestWeightedCrossEntropy:

    def test_perfect_prediction(self, rng):
        labels = rng.integers(0, 2, size=(1, 3, 3))
        one_hot = np.eye(2)[labels].transpose(0, 3, 1, 2)
        e = weighted_cross_entropy(Tensor(one_hot), labels, rng.uniform(size=(1, 3, 3)))
        assert e.item() == 0.0

    def test_single_pixel_half(self):
        e = weighted_cross_entropy(two_class_probs([0.5]), np.zeros((1, 1, 1), dtype=int), np.ones((1, 1, 1)))
        assert_allclose(e.item(), math.log(2.0), rtol=1e-12)

    def test_linear_in_weights(self, rng):
        probs = softmax_channels(Tensor(rng.normal(size=(2, 3, 4, 4))))
        labels = rng.integers(0, 3, size=(2, 4, 4))
        weights = rng.uniform(size=(2, 4, 4))
        full = weighted_cross_entropy(probs, labels, weights).item()
        scaled = weighted_cross_entropy(probs, labels, 0.01 * weights).item()
        assert_allclose(scaled, 0.01 * full, rtol=1e-12)

    def test_zero_probability_is_floored(self):
        e = weighted_cross_entropy(two_class_probs([0.0]), np.zeros((1, 1, 1), dtype=int), np.ones((1, 1, 1)))
        assert_allclose(e.item(), -math.log(1e-12))

    def test_weight_shape_mismatch(self):
        with pytest.raises(ShapeError):
            weighted_cross_entropy(two_class_probs([0.5, 0.5]), np.zeros((1, 1, 2), dtype=int), np.ones((1, 2, 1)))


class TestLossStep:

    def test_uniform_equals_all_ones(self, rng):
        probs = softmax_channels(Tensor(rng.normal(size=(2, 3, 4, 4))))
        labels = rng.integers(0, 3, size=(2, 4, 4))
        e, weights = loss_step(probs, labels, LossConfig('uniform'))
        assert_array_equal(weights, np.ones((2, 4, 4)))
        assert e.item() == weighted_cross_entropy(probs, labels, np.ones((2, 4, 4))).item()

    def test_feedback_on_perfect_prediction(self):
        probs = two_class_probs([1.0, 1.0, 1.0])
        e, weights = loss_step(probs, np.zeros((1, 1, 3), dtype=int), LossConfig('feedback', 3.0))
        assert_allclose(weights, 0.01, atol=1e-12)
        assert e.item() == 0.0

    def test_feedback_prefers_uncertain_pixels(self):
        _, weights = loss_step(two_class_probs([0.3, 0.9]), np.zeros((1, 1, 2), dtype=int),
                               LossConfig('feedback', 3.0))
        assert weights[0, 0, 0] > weights[0, 0, 1]

    def test_feedback_gradient_emphasis(self):
        # two pixels, true class 0, predicted with p_true 0.3 and 0.9
        p = np.array([0.3, 0.9])
        logits = Tensor(np.stack([np.log(p / (1 - p)), np.zeros(2)])[None, :, None, :], requires_grad=True)
        labels = np.zeros((1, 1, 2), dtype=int)
        with Tape() as tape:
            e, weights = loss_step(softmax_channels(logits), labels, LossConfig('feedback', 3.0))
        backward(e, tape)
        per_pixel = np.abs(logits.grad).sum(axis=1)[0, 0]
        ratio = feedback_weight(0.3, 3.0) / feedback_weight(0.9, 3.0)
        assert per_pixel[0] / per_pixel[1] >= ratio
        assert_allclose(weights[0, 0], feedback_weight(p, 3.0))

    def test_weights_carry_no_gradient(self, rng):
        logits = Tensor(rng.normal(size=(1, 3, 2, 2)), requires_grad=True)
        labels = rng.integers(0, 3, size=(1, 2, 2))
        with Tape() as tape:
            e, weights = loss_step(softmax_channels(logits), labels, LossConfig('feedback', 2.0))
        backward(e, tape)
        expected = Tensor(logits.data, requires_grad=True)
        with Tape() as tape:
            fixed = weighted_cross_entropy(softmax_channels(expected), labels, weights)
        backward(fixed, tape)
        assert_allclose(logits.grad, expected.grad, rtol=1e-12)
