"""Differentiable ops used by the segmentation networks.

Convolutions use cross-correlation (no kernel flip). All values are float64.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from autodiff.tensor import Tensor, as_tensor, make_output
from utils.errors import ConfigError, LabelIndexError, ShapeError, UsageError, shape_mismatch

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9

_MODES = ('train', 'eval')


def check_mode(mode: str):
    if mode not in _MODES:
        raise UsageError(f"mode must be one of {_MODES}, got {mode!r}")


def _check_4d(t: Tensor, what: str):
    if t.ndim != 4:
        raise ShapeError(f"{what} must be 4-D N×C×H×W, got shape {t.shape}",
                         dimension='ndim', expected=4, actual=t.ndim)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ----------------------------------------------------------------------------
# Elementwise helpers
# ----------------------------------------------------------------------------

def add(a, b) -> Tensor:
    """Elementwise a + b with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_output('add', out, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    """Elementwise a · b with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    a_data, b_data = a.data, b.data
    out = a_data * b_data

    def backward_fn(g):
        return _unbroadcast(g * b_data, a.shape), _unbroadcast(g * a_data, b.shape)

    return make_output('mul', out, (a, b), backward_fn)


def sum_all(t: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    shape = t.shape
    out = np.asarray(t.data.sum())

    def backward_fn(g):
        return (np.broadcast_to(g, shape).copy(),)

    return make_output('sum_all', out, (t,), backward_fn)


def log(t: Tensor, floor: Optional[float] = None) -> Tensor:
    """
    Natural log, optionally of max(t, floor).

    Below the floor the value is constant, so the gradient there is 0.
    """
    x = t.data
    clamped = x if floor is None else np.maximum(x, floor)
    out = np.log(clamped)

    def backward_fn(g):
        grad = g / clamped
        if floor is not None:
            grad = np.where(x >= floor, grad, 0.0)
        return (grad,)

    return make_output('log', out, (t,), backward_fn)


def relu(t: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is 0."""
    x = t.data
    active = x > 0
    out = np.where(active, x, 0.0)

    def backward_fn(g):
        return (g * active,)

    return make_output('relu', out, (t,), backward_fn)


# ----------------------------------------------------------------------------
# Convolutions and pooling
# ----------------------------------------------------------------------------

def conv2d(input: Tensor, kernel: Tensor, bias: Optional[Tensor] = None,
           padding: str = 'same') -> Tensor:
    """
    2-D cross-correlation.

    Args:
        input: N×Cin×H×W activations
        kernel: Cout×Cin×Kh×Kw weights, Kh and Kw odd
        bias: Optional Cout bias
        padding: 'same' (zero-filled border, keeps H×W) or 'valid'

    Returns:
        N×Cout×H'×W' tensor
    """
    _check_4d(input, 'conv2d input')
    _check_4d(kernel, 'conv2d kernel')
    n, cin, h, w = input.shape
    cout, kcin, kh, kw = kernel.shape
    if kh % 2 == 0:
        raise shape_mismatch('conv2d kernel', 'Kh', 'odd extent', kh)
    if kw % 2 == 0:
        raise shape_mismatch('conv2d kernel', 'Kw', 'odd extent', kw)
    if kcin != cin:
        raise shape_mismatch('conv2d', 'Cin', cin, kcin)
    if bias is not None and bias.shape != (cout,):
        raise shape_mismatch('conv2d bias', 'Cout', (cout,), bias.shape)

    if padding == 'same':
        pad_h, pad_w = (kh - 1) // 2, (kw - 1) // 2
    elif padding == 'valid':
        if h < kh:
            raise shape_mismatch('conv2d valid padding', 'H', f">= {kh}", h)
        if w < kw:
            raise shape_mismatch('conv2d valid padding', 'W', f">= {kw}", w)
        pad_h = pad_w = 0
    else:
        raise UsageError(f"padding must be 'same' or 'valid', got {padding!r}")

    x_padded = np.pad(input.data, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    k = kernel.data
    out_h = x_padded.shape[2] - kh + 1
    out_w = x_padded.shape[3] - kw + 1

    # windows: N×Cin×H'×W'×Kh×Kw view, contracted with the kernel over (Cin, Kh, Kw)
    windows = sliding_window_view(x_padded, (kh, kw), axis=(2, 3))
    out = np.tensordot(windows, k, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward_fn(g):
        view = sliding_window_view(x_padded, (kh, kw), axis=(2, 3))
        grad_kernel = np.tensordot(g, view, axes=([0, 2, 3], [0, 2, 3]))
        grad_padded = np.zeros_like(x_padded)
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g, k[:, :, i, j], axes=([1], [0]))
                grad_padded[:, :, i:i + out_h, j:j + out_w] += contrib.transpose(0, 3, 1, 2)
        grad_input = grad_padded[:, :, pad_h:pad_h + h, pad_w:pad_w + w]
        grad_bias = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return grad_input, grad_kernel, grad_bias

    inputs = (input, kernel) if bias is None else (input, kernel, bias)
    return make_output('conv2d', np.ascontiguousarray(out), inputs, backward_fn)


def max_pool2(input: Tensor) -> Tensor:
    """
    2×2 max pooling with stride 2.

    The gradient goes to the first (row-major) maximum of each window.
    """
    _check_4d(input, 'max_pool2 input')
    n, c, h, w = input.shape
    if h % 2:
        raise shape_mismatch('max_pool2', 'H', 'even extent', h)
    if w % 2:
        raise shape_mismatch('max_pool2', 'W', 'even extent', w)

    windows = (input.data.reshape(n, c, h // 2, 2, w // 2, 2)
               .transpose(0, 1, 2, 4, 3, 5)
               .reshape(n, c, h // 2, w // 2, 4))
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def backward_fn(g):
        routed = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(routed, argmax[..., None], g[..., None], axis=-1)
        grad = (routed.reshape(n, c, h // 2, w // 2, 2, 2)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(n, c, h, w))
        return (grad,)

    return make_output('max_pool2', out, (input,), backward_fn)


def up_conv2(input: Tensor, kernel: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    2×2 transposed convolution with stride 2.

    Output footprints of neighbouring input pixels are disjoint 2×2 tiles.

    Args:
        input: N×C×H×W activations
        kernel: C×Cout×2×2 weights (Cout = C/2 inside the expansive path)
        bias: Optional Cout bias

    Returns:
        N×Cout×2H×2W tensor
    """
    _check_4d(input, 'up_conv2 input')
    _check_4d(kernel, 'up_conv2 kernel')
    n, c, h, w = input.shape
    kc, cout, kh, kw = kernel.shape
    if kc != c:
        raise shape_mismatch('up_conv2', 'C', c, kc)
    if (kh, kw) != (2, 2):
        raise shape_mismatch('up_conv2 kernel', 'Kh×Kw', (2, 2), (kh, kw))
    if bias is not None and bias.shape != (cout,):
        raise shape_mismatch('up_conv2 bias', 'Cout', (cout,), bias.shape)

    x = input.data
    k = kernel.data
    tiles = np.tensordot(x, k, axes=([1], [0]))  # N×H×W×Cout×2×2
    out = tiles.transpose(0, 3, 1, 4, 2, 5).reshape(n, cout, 2 * h, 2 * w)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward_fn(g):
        g_tiles = g.reshape(n, cout, h, 2, w, 2).transpose(0, 2, 4, 1, 3, 5)
        grad_input = np.tensordot(g_tiles, k, axes=([3, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        grad_kernel = np.tensordot(x, g_tiles, axes=([0, 2, 3], [0, 1, 2]))
        grad_bias = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return grad_input, grad_kernel, grad_bias

    inputs = (input, kernel) if bias is None else (input, kernel, bias)
    return make_output('up_conv2', np.ascontiguousarray(out), inputs, backward_fn)


# ----------------------------------------------------------------------------
# Normalization and regularization
# ----------------------------------------------------------------------------

@dataclass
class BatchNormState:
    """Per-channel running statistics; None until initialized."""
    running_mean: Optional[np.ndarray] = None
    running_var: Optional[np.ndarray] = None

    @classmethod
    def fresh(cls, channels: int) -> 'BatchNormState':
        return cls(np.zeros(channels), np.ones(channels))

    @property
    def initialized(self) -> bool:
        return self.running_mean is not None and self.running_var is not None

    def copy(self) -> 'BatchNormState':
        if not self.initialized:
            return BatchNormState()
        return BatchNormState(self.running_mean.copy(), self.running_var.copy())


def batch_norm(input: Tensor, gamma: Tensor, beta: Tensor, mode: str,
               state: BatchNormState, eps: float = BN_EPSILON,
               momentum: float = BN_MOMENTUM) -> Tensor:
    """
    Per-channel batch normalization over N, H, W.

    Train mode normalizes with the biased batch variance and folds the batch
    statistics into `state` (running = momentum·running + (1−momentum)·batch,
    unbiased variance). Eval mode uses the running statistics.
    """
    check_mode(mode)
    _check_4d(input, 'batch_norm input')
    n, c, h, w = input.shape
    if gamma.shape != (c,):
        raise shape_mismatch('batch_norm gamma', 'C', (c,), gamma.shape)
    if beta.shape != (c,):
        raise shape_mismatch('batch_norm beta', 'C', (c,), beta.shape)
    count = n * h * w
    if count < 1:
        raise shape_mismatch('batch_norm', 'N·H·W', '>= 1', count)

    x = input.data
    g_data = gamma.data[None, :, None, None]
    axes = (0, 2, 3)

    if mode == 'train':
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        if not state.initialized:
            fresh = BatchNormState.fresh(c)
            state.running_mean, state.running_var = fresh.running_mean, fresh.running_var
        unbiased = var * count / (count - 1) if count > 1 else var
        state.running_mean = momentum * state.running_mean + (1.0 - momentum) * mean
        state.running_var = momentum * state.running_var + (1.0 - momentum) * unbiased
    else:
        if not state.initialized:
            raise UsageError("batch_norm eval mode needs initialized running statistics")
        mean, var = state.running_mean, state.running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = g_data * x_hat + beta.data[None, :, None, None]

    def backward_fn(g):
        grad_gamma = (g * x_hat).sum(axis=axes)
        grad_beta = g.sum(axis=axes)
        d_hat = g * g_data
        if mode == 'train':
            grad_input = (inv_std[None, :, None, None] / count) * (
                count * d_hat
                - d_hat.sum(axis=axes, keepdims=True)
                - x_hat * (d_hat * x_hat).sum(axis=axes, keepdims=True)
            )
        else:
            grad_input = d_hat * inv_std[None, :, None, None]
        return grad_input, grad_gamma, grad_beta

    return make_output('batch_norm', out, (input, gamma, beta), backward_fn)


def dropout(input: Tensor, rate: float, mode: str, rng: Optional[np.random.Generator]) -> Tensor:
    """
    Inverted dropout: zero each element with probability `rate` and scale the
    survivors by 1/(1−rate). Eval mode, or rate 0, returns the input unchanged.
    """
    check_mode(mode)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}", key='dropout_rate')
    if mode == 'eval' or rate == 0.0:
        return input
    if rng is None:
        raise UsageError("dropout in train mode needs a random generator")

    scale = (rng.random(input.shape) >= rate) / (1.0 - rate)
    out = input.data * scale

    def backward_fn(g):
        return (g * scale,)

    return make_output('dropout', out, (input,), backward_fn)


# ----------------------------------------------------------------------------
# Channel plumbing
# ----------------------------------------------------------------------------

def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the channel axis: a's channels first, then b's."""
    _check_4d(a, 'concat_channels a')
    _check_4d(b, 'concat_channels b')
    for axis, label in ((0, 'N'), (2, 'H'), (3, 'W')):
        if a.shape[axis] != b.shape[axis]:
            raise shape_mismatch('concat_channels', label, a.shape[axis], b.shape[axis])
    split = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward_fn(g):
        return g[:, :split], g[:, split:]

    return make_output('concat_channels', out, (a, b), backward_fn)


def slice_channels(t: Tensor, start: int, stop: int) -> Tensor:
    """Channels [start, stop) of an N×C×H×W tensor."""
    _check_4d(t, 'slice_channels input')
    c = t.shape[1]
    if not 0 <= start < stop <= c:
        raise shape_mismatch('slice_channels', 'C', f"0 <= start < stop <= {c}", (start, stop))
    out = t.data[:, start:stop]
    shape = t.shape

    def backward_fn(g):
        grad = np.zeros(shape)
        grad[:, start:stop] = g
        return (grad,)

    return make_output('slice_channels', out, (t,), backward_fn)


def softmax_channels(logits: Tensor) -> Tensor:
    """Per-pixel softmax over the channel axis, max-subtracted."""
    _check_4d(logits, 'softmax_channels input')
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)

    def backward_fn(g):
        return (probs * (g - (g * probs).sum(axis=1, keepdims=True)),)

    return make_output('softmax_channels', probs, (logits,), backward_fn)


def gather_channels(probs: Tensor, labels: np.ndarray) -> Tensor:
    """
    Pick the channel named by `labels` at every pixel.

    Args:
        probs: N×C×H×W tensor
        labels: N×H×W integer array with values in [0, C)

    Returns:
        N×H×W tensor
    """
    _check_4d(probs, 'gather_channels input')
    n, c, h, w = probs.shape
    labels = np.asarray(labels)
    if labels.shape != (n, h, w):
        raise shape_mismatch('gather_channels labels', 'N×H×W', (n, h, w), labels.shape)
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.mod(labels, 1) == 0):
            raise UsageError("labels must be integer-valued")
        labels = labels.astype(np.int64)
    bad = np.argwhere((labels < 0) | (labels >= c))
    if bad.size:
        pixel = tuple(int(i) for i in bad[0])
        value = int(labels[pixel])
        raise LabelIndexError(
            f"label {value} at pixel (n, y, x)={pixel} is outside [0, {c})",
            pixel=pixel, value=value
        )

    index = labels[:, None, :, :]
    out = np.take_along_axis(probs.data, index, axis=1)[:, 0]

    def backward_fn(g):
        grad = np.zeros((n, c, h, w))
        np.put_along_axis(grad, index, g[:, None, :, :], axis=1)
        return (grad,)

    return make_output('gather_channels', out, (probs,), backward_fn)
