"""Feedback weight map: w(x) = exp(−ln(100)·p^β) in [0.01, 1]."""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from autodiff import Tensor
from utils.errors import ConfigError, DomainError

LOG_100 = math.log(100.0)
WEIGHT_FLOOR = 0.01
LOSS_MODES = ('uniform', 'feedback')

# Per-pixel loss weights, N×H×W, never part of the tape
WeightMap = np.ndarray


@dataclass(frozen=True)
class LossConfig:
    """Weight mode and the feedback exponent β."""
    mode: str = 'uniform'
    beta: float = 3.0

    def __post_init__(self):
        if self.mode not in LOSS_MODES:
            raise ConfigError(f"loss mode must be one of {LOSS_MODES}, got {self.mode!r}", key='loss_mode')
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ConfigError(f"beta must be finite and positive, got {self.beta}", key='beta')


def feedback_weight(p_true: Union[Tensor, np.ndarray, float], beta: float = 3.0) -> WeightMap:
    """
    Map true-class probabilities to loss weights.

    Confident pixels (p → 1) get weight 0.01; hopeless ones (p → 0) get 1.
    The result is a plain array, so no gradient flows through it.

    Args:
        p_true: Probability of the true class per pixel, in [0, 1]
        beta: Exponent β > 0; larger β keeps weights high for longer

    Returns:
        Weight map with values in [0.01, 1]
    """
    if not (math.isfinite(beta) and beta > 0):
        raise ConfigError(f"beta must be finite and positive, got {beta}", key='beta')
    p = p_true.data if isinstance(p_true, Tensor) else np.asarray(p_true, dtype=np.float64)
    if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        bad = p[~((p >= 0.0) & (p <= 1.0))]
        raise DomainError(
            f"true-class probability outside [0, 1] (e.g. {bad.flat[0]!r}); the softmax upstream is broken"
        )
    return np.exp(-LOG_100 * np.power(p, beta))
