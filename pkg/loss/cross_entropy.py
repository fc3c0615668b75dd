"""Weighted cross-entropy over the pixel domain."""

from typing import Tuple

import numpy as np

from autodiff import Tensor, gather_channels, log, mul, no_grad
from autodiff import ops
from loss.weighting import LossConfig, WeightMap, feedback_weight
from utils.errors import ShapeError, shape_mismatch

LOG_FLOOR = 1e-12


def true_class_prob(probs: Tensor, labels: np.ndarray) -> Tensor:
    """
    Probability the network assigns to each pixel's true class.

    Args:
        probs: N×C×H×W probability map
        labels: N×H×W integer labels in [0, C)

    Returns:
        N×H×W tensor, still on the tape
    """
    return gather_channels(probs, labels)


def weighted_cross_entropy(probs: Tensor, labels: np.ndarray, weights: WeightMap) -> Tensor:
    """
    E = −(1/(N·|Ω|)) Σ w(x)·ln p_true(x), with p_true floored at 1e-12.

    Args:
        probs: N×C×H×W probability map
        labels: N×H×W integer labels
        weights: N×H×W constant weights

    Returns:
        Scalar loss tensor
    """
    if probs.ndim != 4:
        raise ShapeError(f"probs must be N×C×H×W, got shape {probs.shape}",
                         dimension='ndim', expected=4, actual=probs.ndim)
    n, _, h, w = probs.shape
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n, h, w):
        raise shape_mismatch('weighted_cross_entropy weights', 'N×H×W', (n, h, w), weights.shape)

    p_true = true_class_prob(probs, labels)
    weighted = mul(log(p_true, floor=LOG_FLOOR), weights)
    return mul(ops.sum_all(weighted), -1.0 / (n * h * w))


def loss_step(probs: Tensor, labels: np.ndarray, config: LossConfig) -> Tuple[Tensor, WeightMap]:
    """
    Loss for one training iteration and the weight map it used.

    Uniform mode weighs every pixel 1. Feedback mode recomputes the weights
    from the current predictions on every call.

    Args:
        probs: N×C×H×W probability map from the forward pass
        labels: N×H×W integer labels
        config: Weight mode and β

    Returns:
        Tuple of (scalar loss, weight map)
    """
    n, _, h, w = probs.shape
    if config.mode == 'uniform':
        weights = np.ones((n, h, w))
    else:
        with no_grad():
            p_true = true_class_prob(probs, labels)
        weights = feedback_weight(p_true, config.beta)
    return weighted_cross_entropy(probs, labels, weights), weights
