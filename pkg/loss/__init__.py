"""Weighted cross-entropy with uniform and feedback pixel weights."""

from .weighting import LOG_100, LossConfig, WeightMap, feedback_weight
from .cross_entropy import loss_step, true_class_prob, weighted_cross_entropy

__all__ = ['LOG_100', 'LossConfig', 'WeightMap', 'feedback_weight',
           'loss_step', 'true_class_prob', 'weighted_cross_entropy']
