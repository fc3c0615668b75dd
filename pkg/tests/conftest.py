"""Shared fixtures for the test suite."""

import os
from typing import Callable, Dict

import numpy as np
import pytest

from autodiff import Tape, Tensor, backward, mul
from autodiff import ops
from data import SynthConfig, generate
from network import NetworkSpec
from utils.logger import setup_logger

FD_STEP = 1e-5


@pytest.fixture(autouse=True, scope='session')
def _logging():
    setup_logger(verbose=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        original = x[idx]
        x[idx] = original + h
        plus = f(x)
        x[idx] = original - h
        minus = f(x)
        x[idx] = original
        grad[idx] = (plus - minus) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


@pytest.fixture
def gradcheck():
    """
    Compare tape gradients of sum(op(*inputs) · R) against finite differences.

    Returns a callable(op, inputs, seed) giving the worst relative error over
    all inputs; op maps Tensors to a Tensor.
    """
    def check(op: Callable[..., Tensor], inputs, seed: int = 0) -> float:
        arrays = [np.array(a, dtype=np.float64) for a in inputs]
        shape_ref = op(*[Tensor(a) for a in arrays])
        weights = np.random.default_rng(seed + 10_000).normal(size=shape_ref.shape)

        leaves = [Tensor(a, requires_grad=True) for a in arrays]
        with Tape() as tape:
            loss = ops.sum_all(mul(op(*leaves), weights))
        backward(loss, tape)

        worst = 0.0
        for position, leaf in enumerate(leaves):
            def scalar(values, position=position):
                args = [Tensor(values if i == position else a) for i, a in enumerate(arrays)]
                return float((op(*args).data * weights).sum())
            worst = max(worst, relative_error(leaf.grad, numeric_gradient(scalar, arrays[position])))
        return worst

    return check


@pytest.fixture
def tiny_spec() -> NetworkSpec:
    return NetworkSpec(variant='plain', depth=1, base_channels=2, num_classes=2, dropout_rate=0.0, input_channels=1)


@pytest.fixture(scope='session')
def small_dataset():
    """Twelve 16×16 synthetic samples."""
    return generate(SynthConfig(height=16, width=16, count=12, small_fraction=0.05,
                                large_fraction=0.3, seed=7))


@pytest.fixture
def write_config(tmp_path) -> Callable[..., str]:
    """Write a key=value config file and return its path."""
    def write(values: Dict[str, object], name: str = 'run.cfg') -> str:
        path = os.path.join(str(tmp_path), name)
        with open(path, 'w', encoding='utf-8') as f:
            for key, value in values.items():
                f.write(f"{key}={value}\n")
        return path
    return write
