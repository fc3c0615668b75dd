"""U-net graph: contracting path, bottleneck, expansive path, 1×1 head."""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from autodiff import (BatchNormState, Tensor, concat_channels, dropout, max_pool2,
                      no_grad, softmax_channels)
from autodiff.ops import check_mode
from network.layers import LAYER_TYPES, Head, Layer, ParamDecl, UpConv
from network.spec import NetworkSpec
from utils.errors import ShapeError, shape_mismatch
from utils.logger import get_logger

logger = get_logger(__name__)


def _layers(spec: NetworkSpec) -> Tuple[List[Layer], Layer, List[Tuple[Layer, Layer]], Layer]:
    """Layer objects in canonical order: encoders, bottleneck, (up, decoder) pairs, head."""
    variant = LAYER_TYPES[spec.variant]
    encoders = []
    in_channels = spec.input_channels
    for level in range(spec.depth):
        encoders.append(variant(f'enc{level}', in_channels, spec.channels(level)))
        in_channels = spec.channels(level)
    bottleneck = variant('bottleneck', in_channels, spec.channels(spec.depth))

    decoders = []
    for level in reversed(range(spec.depth)):
        up = UpConv(f'up{level}', spec.channels(level + 1), spec.channels(level))
        dec = variant(f'dec{level}', 2 * spec.channels(level), spec.channels(level))
        decoders.append((up, dec))
    head = Head('head', spec.channels(0), spec.num_classes)
    return encoders, bottleneck, decoders, head


def _ordered(spec: NetworkSpec) -> List[Layer]:
    encoders, bottleneck, decoders, head = _layers(spec)
    ordered = list(encoders) + [bottleneck]
    for up, dec in decoders:
        ordered += [up, dec]
    return ordered + [head]


def parameter_layout(spec: NetworkSpec) -> List[ParamDecl]:
    """Every parameter declaration, in canonical order."""
    return [decl for layer in _ordered(spec) for decl in layer.declare()]


def batch_norm_layout(spec: NetworkSpec) -> List[Tuple[str, int]]:
    """(state name, channels) of every batch norm, in canonical order."""
    return [bn for layer in _ordered(spec) for bn in layer.batch_norms()]


def count_parameters(spec: NetworkSpec) -> int:
    """Number of scalar parameters, a pure function of the spec."""
    return int(sum(int(np.prod(decl.shape)) for decl in parameter_layout(spec)))


@dataclass
class NetworkSnapshot:
    """Detached copy of parameter values and batch-norm running statistics."""
    parameters: Dict[str, np.ndarray]
    bn_states: Dict[str, BatchNormState]


class Network:
    """
    Realized U-net: named parameter tensors plus batch-norm running state.

    A Network is exclusively owned while training (batch statistics and the
    dropout generator mutate). Eval-mode forward does not record a tape and
    does not mutate, so it can run from several threads.
    """

    def __init__(self, spec: NetworkSpec, parameters: 'OrderedDict[str, Tensor]',
                 bn_states: 'OrderedDict[str, BatchNormState]',
                 dropout_rng: Optional[np.random.Generator] = None):
        self.spec = spec
        self.parameters = parameters
        self.bn_states = bn_states
        self.dropout_rng = dropout_rng or np.random.default_rng(0)
        self._encoders, self._bottleneck, self._decoders, self._head = _layers(spec)

    @classmethod
    def build(cls, spec: NetworkSpec, rng: np.random.Generator) -> 'Network':
        """
        Build a network with He-normal kernels, zero biases, γ=1 and β=0.

        Args:
            spec: Validated architecture description
            rng: Generator consumed in canonical parameter order, then used
                 to seed the dropout generator

        Returns:
            Network instance
        """
        spec.validate()
        parameters: 'OrderedDict[str, Tensor]' = OrderedDict()
        bn_states: 'OrderedDict[str, BatchNormState]' = OrderedDict()
        for layer in _ordered(spec):
            for decl in layer.declare():
                parameters[decl.name] = Tensor(decl.initial_value(rng), requires_grad=True, name=decl.name)
            for name, channels in layer.batch_norms():
                bn_states[name] = BatchNormState.fresh(channels)

        dropout_rng = np.random.default_rng(rng.integers(0, 2 ** 63 - 1))
        network = cls(spec, parameters, bn_states, dropout_rng)
        logger.debug(f"Built {spec.variant} network: depth={spec.depth}, "
                     f"base_channels={spec.base_channels}, parameters={network.parameter_count():,}")
        return network

    def parameter_count(self) -> int:
        return int(sum(t.size for t in self.parameters.values()))

    def parameter_list(self) -> List[Tensor]:
        return list(self.parameters.values())

    def parameter_norms(self) -> Dict[str, float]:
        return {name: float(np.linalg.norm(t.data)) for name, t in self.parameters.items()}

    def check_input(self, images: Tensor):
        """Raise ShapeError unless images are N×input_channels×H×W with H, W divisible by 2^depth."""
        if images.ndim != 4:
            raise ShapeError(f"images must be N×C×H×W, got shape {images.shape}",
                             dimension='ndim', expected=4, actual=images.ndim)
        if images.shape[1] != self.spec.input_channels:
            raise shape_mismatch('network input', 'C', self.spec.input_channels, images.shape[1])
        divisor = self.spec.divisor
        for axis, label in ((2, 'H'), (3, 'W')):
            if images.shape[axis] % divisor:
                raise ShapeError(
                    f"input {label}={images.shape[axis]} is not divisible by 2^depth = {divisor}",
                    dimension=label, expected=f"multiple of {divisor}", actual=images.shape[axis]
                )

    def logits(self, images: Tensor, mode: str = 'eval') -> Tensor:
        """
        Run the graph up to the 1×1 head.

        Args:
            images: N×input_channels×H×W tensor
            mode: 'train' (batch statistics, dropout, tape) or 'eval'

        Returns:
            N×num_classes×H×W logits
        """
        check_mode(mode)
        self.check_input(images)
        if mode == 'eval':
            with no_grad():
                return self._run(images, mode)
        return self._run(images, mode)

    def forward(self, images: Tensor, mode: str = 'eval') -> Tensor:
        """Per-pixel class probabilities, N×num_classes×H×W."""
        logits = self.logits(images, mode)
        if mode == 'eval':
            with no_grad():
                return softmax_channels(logits)
        return softmax_channels(logits)

    def _run(self, x: Tensor, mode: str) -> Tensor:
        params, states, rate = self.parameters, self.bn_states, self.spec.dropout_rate
        skips = []
        for encoder in self._encoders:
            x = encoder.forward(params, states, x, mode)
            x = dropout(x, rate, mode, self.dropout_rng)
            skips.append(x)
            x = max_pool2(x)

        x = self._bottleneck.forward(params, states, x, mode)
        x = dropout(x, rate, mode, self.dropout_rng)

        for (up, decoder), skip in zip(self._decoders, reversed(skips)):
            x = up.forward(params, states, x, mode)
            x = concat_channels(skip, x)
            x = decoder.forward(params, states, x, mode)

        return self._head.forward(params, states, x, mode)

    def snapshot(self) -> NetworkSnapshot:
        return NetworkSnapshot(
            parameters={name: t.numpy() for name, t in self.parameters.items()},
            bn_states={name: state.copy() for name, state in self.bn_states.items()},
        )

    def restore(self, snapshot: NetworkSnapshot):
        for name, values in snapshot.parameters.items():
            self.parameters[name].assign(values)
        for name, state in snapshot.bn_states.items():
            self.bn_states[name] = state.copy()

    def frozen_copy(self) -> 'Network':
        """Independent copy for evaluation, sharing nothing mutable."""
        snap = self.snapshot()
        parameters = OrderedDict(
            (name, Tensor(values, requires_grad=False, name=name))
            for name, values in snap.parameters.items()
        )
        return Network(self.spec, parameters, OrderedDict(snap.bn_states))
