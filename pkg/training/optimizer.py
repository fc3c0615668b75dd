"""Adam with bias-corrected moment estimates."""

from collections import OrderedDict
from typing import Dict, Sequence

import numpy as np

from autodiff import Tensor
from utils.errors import UsageError


class Adam:
    """
    Per-parameter first and second moment stores plus the step counter.

    θ ← θ − lr·m̂ / (√v̂ + ε), with m̂ = m/(1−β1^t) and v̂ = v/(1−β2^t).
    """

    def __init__(self, parameters: Sequence[Tensor], learning_rate: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.parameters = list(parameters)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m: Dict[int, np.ndarray] = OrderedDict((id(p), np.zeros(p.shape)) for p in self.parameters)
        self.v: Dict[int, np.ndarray] = OrderedDict((id(p), np.zeros(p.shape)) for p in self.parameters)

    def step(self):
        """
        Apply one update from the gradients stored on the parameters.

        Raises:
            UsageError: if any parameter has no gradient
        """
        missing = [p.name or f"#{i}" for i, p in enumerate(self.parameters) if p.grad is None]
        if missing:
            raise UsageError(f"Adam step without gradients for {len(missing)} parameters, e.g. {missing[0]}")

        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p in self.parameters:
            g = p.grad
            m = self.m[id(p)] = self.beta1 * self.m[id(p)] + (1.0 - self.beta1) * g
            v = self.v[id(p)] = self.beta2 * self.v[id(p)] + (1.0 - self.beta2) * g * g
            m_hat = m / correction1
            v_hat = v / correction2
            p.assign(p.data - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon))

    def zero_grad(self):
        for p in self.parameters:
            p.zero_grad()
