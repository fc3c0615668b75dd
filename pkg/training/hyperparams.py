"""Training hyperparameters."""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional

from loss import LossConfig
from utils.errors import ConfigError


@dataclass(frozen=True)
class Hyperparams:
    """Mini-batch Adam settings; iterations_per_epoch=0 means ⌈n_train/batch_size⌉."""
    batch_size: int = 5
    learning_rate: float = 0.001
    epochs: int = 400
    iterations_per_epoch: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    seed: Optional[int] = None
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    progress_bar: bool = True
    eval_workers: int = 1

    def validate(self, n_train: int):
        """
        Check ranges against the training set size.

        Args:
            n_train: Number of training samples
        """
        if self.seed is None:
            raise ConfigError("seed is required for training", key='seed')
        for key in ('batch_size', 'epochs', 'eval_workers'):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1, got {getattr(self, key)}", key=key)
        if self.iterations_per_epoch < 0:
            raise ConfigError(f"iterations_per_epoch must be >= 0, got {self.iterations_per_epoch}",
                              key='iterations_per_epoch')
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}", key='learning_rate')
        for key in ('adam_beta1', 'adam_beta2'):
            if not 0.0 <= getattr(self, key) < 1.0:
                raise ConfigError(f"{key} must be in [0, 1), got {getattr(self, key)}", key=key)
        if self.adam_epsilon <= 0:
            raise ConfigError(f"adam_epsilon must be positive, got {self.adam_epsilon}", key='adam_epsilon')
        if self.batch_size > n_train:
            raise ConfigError(f"batch_size={self.batch_size} exceeds the {n_train} training samples",
                              key='batch_size')

    def iterations(self, n_train: int) -> int:
        """Iterations per epoch for a training set of n_train samples."""
        if self.iterations_per_epoch:
            return self.iterations_per_epoch
        return math.ceil(n_train / self.batch_size)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
