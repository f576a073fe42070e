# core/tensor_engine.py
"""
Minimal tensor engine: convolution, max pooling, activations, a recorded
forward pass (tape) with backward, and SGD with momentum + L2 decay.

Tensors are numpy arrays laid out channel-first ([C, H, W]); float64 unless a
network is built with dtype=float32.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import ConfigurationError, ShapeError, StateError

logger = logging.getLogger(__name__)

Tensor = np.ndarray

LEAKY_SLOPE = 0.1
# w/h logits are clipped before exp so outputs stay finite
MAX_SIZE_LOGIT = 20.0


class Activation(str, Enum):
    LEAKY = "leaky"
    MISH = "mish"
    LINEAR = "linear"


@dataclass
class Param:
    """A trainable array with its gradient and momentum buffer"""
    value: Tensor
    grad: Optional[Tensor] = None
    momentum_buf: Optional[Tensor] = None
    name: str = ""

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.momentum_buf is None:
            self.momentum_buf = np.zeros_like(self.value)
        if not (self.value.shape == self.grad.shape == self.momentum_buf.shape):
            raise ShapeError(f"param {self.name!r}: value/grad/momentum shapes differ")

    @property
    def size(self) -> int:
        return int(self.value.size)


# ---------------------------------------------------------------- convolution

def _conv_windows(xp: Tensor, k: int, stride: int) -> Tensor:
    # (C, H', W', k, k) view over the padded input
    return sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]


def _check_conv(x: Tensor, weights: Tensor, bias: Tensor, stride: int, pad: int) -> None:
    if x.ndim != 3:
        raise ShapeError(f"conv2d expects [C,H,W] input, got shape {x.shape}")
    if weights.ndim != 4 or weights.shape[2] != weights.shape[3]:
        raise ConfigurationError(f"conv2d expects [F,C,k,k] weights, got shape {weights.shape}")
    if weights.shape[1] != x.shape[0]:
        raise ConfigurationError(
            f"input has {x.shape[0]} channels but filters expect {weights.shape[1]}"
        )
    if bias.shape != (weights.shape[0],):
        raise ConfigurationError(f"bias shape {bias.shape} does not match {weights.shape[0]} filters")
    if stride < 1 or pad < 0:
        raise ConfigurationError(f"invalid stride {stride} / pad {pad}")
    k = weights.shape[2]
    if k > x.shape[1] + 2 * pad or k > x.shape[2] + 2 * pad:
        raise ConfigurationError(f"kernel {k} larger than padded input {x.shape[1:]} (pad {pad})")


def conv2d(x: Tensor, weights: Tensor, bias: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of a [C,H,W] input with [F,C,k,k] filters plus bias"""
    _check_conv(x, weights, bias, stride, pad)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    windows = _conv_windows(xp, weights.shape[2], stride)
    out = np.tensordot(weights, windows, axes=([1, 2, 3], [0, 3, 4]))
    return out + bias[:, None, None]


def conv2d_backward(x: Tensor, weights: Tensor, dy: Tensor, stride: int,
                    pad: int) -> Tuple[Tensor, Tensor, Tensor]:
    """Gradients (dx, dweights, dbias) of conv2d for upstream dy [F,H',W']"""
    k = weights.shape[2]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    windows = _conv_windows(xp, k, stride)
    out_h, out_w = dy.shape[1], dy.shape[2]

    dweights = np.tensordot(dy, windows, axes=([1, 2], [1, 2]))
    dbias = dy.sum(axis=(1, 2))

    dcols = np.tensordot(weights, dy, axes=([0], [0]))  # (C, k, k, H', W')
    dxp = np.zeros_like(xp, dtype=dy.dtype)
    row_stop = stride * (out_h - 1) + 1
    col_stop = stride * (out_w - 1) + 1
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + row_stop:stride, j:j + col_stop:stride] += dcols[:, i, j]
    dx = dxp[:, pad:pad + x.shape[1], pad:pad + x.shape[2]]
    return dx, dweights, dbias


# ---------------------------------------------------------------- pooling

def _pool_input(x: Tensor, size: int, stride: int, pad: int) -> Tensor:
    if x.ndim != 3:
        raise ShapeError(f"maxpool2d expects [C,H,W] input, got shape {x.shape}")
    if size < 1 or stride < 1 or pad < 0:
        raise ConfigurationError(f"invalid pool size {size} / stride {stride} / pad {pad}")
    if size > x.shape[1] + pad or size > x.shape[2] + pad:
        raise ConfigurationError(f"pool window {size} larger than input {x.shape[1:]}")
    if pad:
        return np.pad(x, ((0, 0), (0, pad), (0, pad)), constant_values=-np.inf)
    return x


def _pool_argmax(x: Tensor, size: int, stride: int, pad: int) -> Tuple[Tensor, Tensor]:
    xp = _pool_input(x, size, stride, pad)
    windows = sliding_window_view(xp, (size, size), axis=(1, 2))[:, ::stride, ::stride]
    flat = windows.reshape(windows.shape[:3] + (size * size,))
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool2d(x: Tensor, size: int, stride: int, pad: int = 0) -> Tensor:
    """Max over size x size windows; pad adds -inf rows/cols at the bottom/right"""
    out, _ = _pool_argmax(x, size, stride, pad)
    return out


def maxpool2d_backward(x: Tensor, arg: Tensor, dy: Tensor, size: int, stride: int,
                       pad: int) -> Tensor:
    channels, out_h, out_w = arg.shape
    c_idx = np.arange(channels)[:, None, None]
    rows = np.arange(out_h)[None, :, None] * stride + arg // size
    cols = np.arange(out_w)[None, None, :] * stride + arg % size
    dxp = np.zeros((channels, x.shape[1] + pad, x.shape[2] + pad), dtype=dy.dtype)
    np.add.at(dxp, (np.broadcast_to(c_idx, arg.shape), rows, cols), dy)
    return dxp[:, :x.shape[1], :x.shape[2]]


# ---------------------------------------------------------------- activations

def mish(x: Tensor) -> Tensor:
    """x * tanh(softplus(x))"""
    return x * np.tanh(np.logaddexp(0.0, x))


def mish_grad(x: Tensor) -> Tensor:
    t = np.tanh(np.logaddexp(0.0, x))
    return t + x * (1.0 - t * t) * expit(x)


def activate(x: Tensor, kind: Activation) -> Tensor:
    """Elementwise leaky (slope 0.1), mish or linear (identity)"""
    kind = Activation(kind)
    if kind is Activation.LEAKY:
        return np.where(x >= 0, x, LEAKY_SLOPE * x)
    if kind is Activation.MISH:
        return mish(x)
    return np.array(x, copy=True)


def activation_grad(x: Tensor, kind: Activation) -> Tensor:
    """Derivative of activate() at pre-activation x"""
    kind = Activation(kind)
    if kind is Activation.LEAKY:
        return np.where(x >= 0, 1.0, LEAKY_SLOPE).astype(x.dtype)
    if kind is Activation.MISH:
        return mish_grad(x)
    return np.ones_like(x)


# ---------------------------------------------------------------- layers

class Layer:
    """Stateless apart from its params: forward returns (output, cache)"""

    kind = "layer"

    def params(self) -> List[Param]:
        return []

    def forward(self, x: Tensor) -> Tuple[Tensor, Any]:
        raise NotImplementedError

    def backward(self, cache: Any, dy: Tensor) -> Tensor:
        raise NotImplementedError


class Conv2DLayer(Layer):
    """Convolution fused with its activation"""

    kind = "conv"

    def __init__(self, weight: Param, bias: Param, stride: int = 1, pad: int = 0,
                 activation: Activation = Activation.LEAKY):
        self.weight = weight
        self.bias = bias
        self.stride = stride
        self.pad = pad
        self.activation = Activation(activation)

    def params(self) -> List[Param]:
        return [self.bias, self.weight]

    def forward(self, x: Tensor) -> Tuple[Tensor, Any]:
        z = conv2d(x, self.weight.value, self.bias.value, self.stride, self.pad)
        return activate(z, self.activation), (x, z)

    def backward(self, cache: Any, dy: Tensor) -> Tensor:
        x, z = cache
        dz = dy * activation_grad(z, self.activation)
        dx, dw, db = conv2d_backward(x, self.weight.value, dz, self.stride, self.pad)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class MaxPoolLayer(Layer):
    kind = "maxpool"

    def __init__(self, size: int = 2, stride: int = 2, pad: int = 0):
        self.size = size
        self.stride = stride
        self.pad = pad

    def forward(self, x: Tensor) -> Tuple[Tensor, Any]:
        out, arg = _pool_argmax(x, self.size, self.stride, self.pad)
        return out, (x, arg)

    def backward(self, cache: Any, dy: Tensor) -> Tensor:
        x, arg = cache
        return maxpool2d_backward(x, arg, dy, self.size, self.stride, self.pad)


class DetectHeadLayer(Layer):
    """1x1 linear convolution to B*5+C channels, then output squashing.

    Output is [g, g, B*5+C]: per slot (x, y, w, h, conf), then class scores.
    x, y, conf and classes go through the logistic; w, h = exp(t) / g.
    """

    kind = "detect_head"

    def __init__(self, weight: Param, bias: Param, boxes_per_cell: int, num_classes: int):
        self.weight = weight
        self.bias = bias
        self.boxes_per_cell = boxes_per_cell
        self.num_classes = num_classes
        depth = boxes_per_cell * 5 + num_classes
        if weight.value.shape[0] != depth:
            raise ConfigurationError(f"head has {weight.value.shape[0]} filters, expected {depth}")
        self.size_mask = np.zeros(depth, dtype=bool)
        for slot in range(boxes_per_cell):
            self.size_mask[slot * 5 + 2:slot * 5 + 4] = True

    def params(self) -> List[Param]:
        return [self.bias, self.weight]

    def squash(self, raw: Tensor, grid: int) -> Tensor:
        out = expit(raw)
        sizes = np.exp(np.clip(raw[..., self.size_mask], -MAX_SIZE_LOGIT, MAX_SIZE_LOGIT)) / grid
        out[..., self.size_mask] = sizes
        return out

    def forward(self, x: Tensor) -> Tuple[Tensor, Any]:
        z = conv2d(x, self.weight.value, self.bias.value, 1, 0)
        raw = np.transpose(z, (1, 2, 0))
        out = self.squash(raw, raw.shape[0])
        return out, (x, raw, out)

    def backward(self, cache: Any, dy: Tensor) -> Tensor:
        x, raw, out = cache
        draw = dy * out * (1.0 - out)
        inside = np.abs(raw[..., self.size_mask]) < MAX_SIZE_LOGIT
        draw[..., self.size_mask] = dy[..., self.size_mask] * out[..., self.size_mask] * inside
        dz = np.transpose(draw, (2, 0, 1))
        dx, dw, db = conv2d_backward(x, self.weight.value, dz, 1, 0)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


# ---------------------------------------------------------------- tape

@dataclass
class Tape:
    """Record of one forward pass; consumed by a single backward()"""
    entries: List[Tuple[Layer, Any]] = field(default_factory=list)
    consumed: bool = False

    def record(self, layer: Layer, cache: Any) -> None:
        self.entries.append((layer, cache))


def run_layers(layers: Sequence[Layer], x: Tensor, tape: Optional[Tape] = None) -> Tensor:
    for layer in layers:
        x, cache = layer.forward(x)
        if tape is not None:
            tape.record(layer, cache)
    return x


def backward(tape: Optional[Tape], upstream_grad: Tensor) -> Tensor:
    """Accumulate parameter gradients along the tape; returns d(input)"""
    if tape is None or not tape.entries:
        raise StateError("backward called before a forward pass was recorded")
    if tape.consumed:
        raise StateError("this tape was already used by a backward pass")
    grad = upstream_grad
    for layer, cache in reversed(tape.entries):
        grad = layer.backward(cache, grad)
    tape.consumed = True
    return grad


def zero_grad(params: Iterable[Param]) -> None:
    for param in params:
        param.grad[...] = 0.0


def sgd_step(params: Iterable[Param], cfg: Any) -> None:
    """buf <- momentum*buf - lr*(grad + decay*value); value <- value + buf"""
    lr, momentum, decay = cfg.learning_rate, cfg.momentum, cfg.decay
    for param in params:
        param.momentum_buf[...] = momentum * param.momentum_buf - lr * (param.grad + decay * param.value)
        param.value += param.momentum_buf
