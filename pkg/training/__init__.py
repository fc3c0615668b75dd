"""Training loop, optimizer and evaluation."""

from .hyperparams import Hyperparams
from .optimizer import Adam
from .evaluator import evaluate
from .trainer import TrainState, batch_order, train, train_step, validation_dice

__all__ = ['Hyperparams', 'Adam', 'evaluate', 'TrainState', 'batch_order',
           'train', 'train_step', 'validation_dice']
