"""Dense tensors with reverse-mode automatic differentiation."""

from .tensor import Tape, Tensor, as_tensor, backward, no_grad, zero_grad
from .ops import (
    BatchNormState, add, batch_norm, concat_channels, conv2d, dropout, gather_channels,
    log, max_pool2, mul, relu, slice_channels, softmax_channels, sum_all, up_conv2,
)

__all__ = [
    'Tape', 'Tensor', 'as_tensor', 'backward', 'no_grad', 'zero_grad',
    'BatchNormState', 'add', 'batch_norm', 'concat_channels', 'conv2d', 'dropout',
    'gather_channels', 'log', 'max_pool2', 'mul', 'relu', 'slice_channels',
    'softmax_channels', 'sum_all', 'up_conv2',
]
