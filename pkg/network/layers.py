"""Layer building blocks for the contracting and expansive paths."""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Tuple

import numpy as np

from autodiff import BatchNormState, Tensor, add, batch_norm, conv2d, relu, up_conv2
from utils.errors import ShapeError


@dataclass(frozen=True)
class ParamDecl:
    """A parameter a layer needs: stable name, shape, and initializer kind."""
    name: str
    shape: Tuple[int, ...]
    kind: str  # kernel | bias | gamma | beta
    fan_in: int = 1

    def initial_value(self, rng: np.random.Generator) -> np.ndarray:
        """He-normal kernels; zero biases and betas; unit gammas."""
        if self.kind == 'kernel':
            return rng.normal(0.0, np.sqrt(2.0 / self.fan_in), size=self.shape)
        if self.kind == 'gamma':
            return np.ones(self.shape)
        return np.zeros(self.shape)


Params = Mapping[str, Tensor]
BNStates = Mapping[str, BatchNormState]


class Layer:
    """Base class: a named block that declares parameters and runs forward."""

    def __init__(self, prefix: str, in_channels: int, out_channels: int):
        self.prefix = prefix
        self.in_channels = in_channels
        self.out_channels = out_channels

    def declare(self) -> List[ParamDecl]:
        raise NotImplementedError

    def batch_norms(self) -> List[Tuple[str, int]]:
        """(state name, channels) for every batch norm in the layer."""
        return []

    def forward(self, params: Params, bn_states: BNStates, x: Tensor, mode: str) -> Tensor:
        raise NotImplementedError

    def _name(self, suffix: str) -> str:
        return f"{self.prefix}.{suffix}"


class PlainLayer(Layer):
    """[conv3×3 → relu] ×2."""

    def declare(self) -> List[ParamDecl]:
        c_in, c_out = self.in_channels, self.out_channels
        return [
            ParamDecl(self._name('conv1.kernel'), (c_out, c_in, 3, 3), 'kernel', c_in * 9),
            ParamDecl(self._name('conv1.bias'), (c_out,), 'bias'),
            ParamDecl(self._name('conv2.kernel'), (c_out, c_out, 3, 3), 'kernel', c_out * 9),
            ParamDecl(self._name('conv2.bias'), (c_out,), 'bias'),
        ]

    def forward(self, params, bn_states, x, mode):
        p = lambda suffix: params[self._name(suffix)]
        x = relu(conv2d(x, p('conv1.kernel'), p('conv1.bias')))
        return relu(conv2d(x, p('conv2.kernel'), p('conv2.bias')))


class BRULayer(Layer):
    """
    conv3×3 → BN → relu → conv3×3 → BN → add(shortcut) → relu.

    The shortcut is the identity when channel counts match, otherwise a
    1×1 conv + BN projection. Convolutions feeding a batch norm carry no bias
    since the normalization removes it.
    """

    @property
    def projects(self) -> bool:
        return self.in_channels != self.out_channels

    def declare(self) -> List[ParamDecl]:
        c_in, c_out = self.in_channels, self.out_channels
        decls = [
            ParamDecl(self._name('conv1.kernel'), (c_out, c_in, 3, 3), 'kernel', c_in * 9),
            ParamDecl(self._name('bn1.gamma'), (c_out,), 'gamma'),
            ParamDecl(self._name('bn1.beta'), (c_out,), 'beta'),
            ParamDecl(self._name('conv2.kernel'), (c_out, c_out, 3, 3), 'kernel', c_out * 9),
            ParamDecl(self._name('bn2.gamma'), (c_out,), 'gamma'),
            ParamDecl(self._name('bn2.beta'), (c_out,), 'beta'),
        ]
        if self.projects:
            decls += [
                ParamDecl(self._name('proj.kernel'), (c_out, c_in, 1, 1), 'kernel', c_in),
                ParamDecl(self._name('proj_bn.gamma'), (c_out,), 'gamma'),
                ParamDecl(self._name('proj_bn.beta'), (c_out,), 'beta'),
            ]
        return decls

    def batch_norms(self) -> List[Tuple[str, int]]:
        names = [(self._name('bn1'), self.out_channels), (self._name('bn2'), self.out_channels)]
        if self.projects:
            names.append((self._name('proj_bn'), self.out_channels))
        return names

    def _bn(self, params, bn_states, x, which, mode):
        return batch_norm(x, params[self._name(f'{which}.gamma')], params[self._name(f'{which}.beta')],
                          mode, bn_states[self._name(which)])

    def forward(self, params, bn_states, x, mode):
        shortcut = x
        if self.projects:
            shortcut = conv2d(x, params[self._name('proj.kernel')])
            shortcut = self._bn(params, bn_states, shortcut, 'proj_bn', mode)

        y = conv2d(x, params[self._name('conv1.kernel')])
        y = relu(self._bn(params, bn_states, y, 'bn1', mode))
        y = conv2d(y, params[self._name('conv2.kernel')])
        y = self._bn(params, bn_states, y, 'bn2', mode)
        return relu(add(y, shortcut))


class UpConv(Layer):
    """2×2 up-convolution halving the channel count."""

    def __init__(self, prefix: str, in_channels: int, out_channels: int):
        if in_channels % 2 or out_channels * 2 != in_channels:
            raise ShapeError(
                f"{prefix}: up-convolution needs an even channel count C and C/2 outputs, "
                f"got {in_channels} -> {out_channels}",
                dimension='C', expected='even', actual=in_channels
            )
        super().__init__(prefix, in_channels, out_channels)

    def declare(self) -> List[ParamDecl]:
        return [
            ParamDecl(self._name('kernel'), (self.in_channels, self.out_channels, 2, 2), 'kernel',
                      self.in_channels * 4),
            ParamDecl(self._name('bias'), (self.out_channels,), 'bias'),
        ]

    def forward(self, params, bn_states, x, mode):
        return up_conv2(x, params[self._name('kernel')], params[self._name('bias')])


class Head(Layer):
    """Final 1×1 convolution to the class channels."""

    def declare(self) -> List[ParamDecl]:
        return [
            ParamDecl(self._name('kernel'), (self.out_channels, self.in_channels, 1, 1), 'kernel',
                      self.in_channels),
            ParamDecl(self._name('bias'), (self.out_channels,), 'bias'),
        ]

    def forward(self, params, bn_states, x, mode):
        return conv2d(x, params[self._name('kernel')], params[self._name('bias')])


LAYER_TYPES: Dict[str, type] = {'plain': PlainLayer, 'bru': BRULayer}
