"""
Neural network building blocks for carbospec.
=============================================

Plain-numpy layers with explicit reverse-mode gradients:

- Tensor: parameter array plus its gradient buffer
- Dense, ReLU, Conv2D (same padding), MaxPool2D (floor crop), Flatten
- Sequential: runs layers forward, then backward in reverse order

Image tensors are laid out (batch, height, width, channels). Convolutions
run sample by sample, so gradient accumulation always follows sample-index
order and repeated runs give identical bytes.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ValidationError


class ShapeMismatchError(ValidationError):
    """Input shape does not match the layer or network."""
    pass


@dataclass
class Tensor:
    """A parameter array with a gradient buffer of the same shape."""

    data: np.ndarray
    requires_grad: bool = True
    grad: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.requires_grad and self.grad is None:
            self.grad = np.zeros_like(self.data)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)


def _he_uniform(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / max(1, fan_in))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base class: forward caches what backward needs."""

    def parameters(self) -> List[Tensor]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return input_shape


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Tensor(_he_uniform(rng, n_in, (n_in, n_out)))
        self.bias = Tensor(np.zeros(n_out))
        self._x: Optional[np.ndarray] = None

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.weight.shape[0]:
            raise ShapeMismatchError(f"Dense expects (batch, {self.weight.shape[0]}), got {x.shape}")
        self._x = x
        return x @ self.weight.data + self.bias.data

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        self.weight.grad += self._x.T @ grad_out
        self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.data.T

    def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return (self.weight.shape[1],)


class ReLU(Layer):
    """max(0, x); the derivative at exactly 0 is 0."""

    def __init__(self):
        self._mask: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return np.where(self._mask, grad_out, 0.0)


class Conv2D(Layer):
    """
    Stride-1 convolution with same padding.

    Weights are (kh, kw, c_in, c_out); each output pixel is the dot product
    of its padded (kh, kw, c_in) neighbourhood with the kernel, plus bias.
    """

    def __init__(self, c_in: int, c_out: int, kernel: Tuple[int, int] = (3, 3),
                 rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = kernel
        self.kernel = (int(kh), int(kw))
        self.c_in = c_in
        self.c_out = c_out
        self.weight = Tensor(_he_uniform(rng, kh * kw * c_in, (kh, kw, c_in, c_out)))
        self.bias = Tensor(np.zeros(c_out))
        self._x: Optional[np.ndarray] = None

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]

    def _pad_widths(self) -> Tuple[Tuple[int, int], Tuple[int, int]]:
        kh, kw = self.kernel
        top, left = (kh - 1) // 2, (kw - 1) // 2
        return (top, kh - 1 - top), (left, kw - 1 - left)

    def _columns(self, sample: np.ndarray) -> np.ndarray:
        """im2col of one (H, W, C) sample -> (H*W, kh*kw*C)."""
        rows, cols = self._pad_widths()
        padded = np.pad(sample, (rows, cols, (0, 0)))
        windows = sliding_window_view(padded, self.kernel, axis=(0, 1))  # H, W, C, kh, kw
        h, w = sample.shape[:2]
        return windows.transpose(0, 1, 3, 4, 2).reshape(h * w, -1)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[3] != self.c_in:
            raise ShapeMismatchError(f"Conv2D expects (batch, H, W, {self.c_in}), got {x.shape}")
        self._x = x
        batch, h, w, _ = x.shape
        kernel = self.weight.data.reshape(-1, self.c_out)
        out = np.empty((batch, h, w, self.c_out))
        for i in range(batch):
            out[i] = (self._columns(x[i]) @ kernel + self.bias.data).reshape(h, w, self.c_out)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x = self._x
        batch, h, w, c = x.shape
        kh, kw = self.kernel
        (top, bottom), (left, right) = self._pad_widths()
        kernel = self.weight.data.reshape(-1, self.c_out)
        grad_kernel = self.weight.grad.reshape(-1, self.c_out)
        grad_x = np.empty_like(x)
        for i in range(batch):
            g = grad_out[i].reshape(h * w, self.c_out)
            grad_kernel += self._columns(x[i]).T @ g
            self.bias.grad += g.sum(axis=0)
            dcols = (g @ kernel.T).reshape(h, w, kh, kw, c)
            dpadded = np.zeros((h + top + bottom, w + left + right, c))
            for di in range(kh):
                for dj in range(kw):
                    dpadded[di:di + h, dj:dj + w, :] += dcols[:, :, di, dj, :]
            grad_x[i] = dpadded[top:top + h, left:left + w, :]
        return grad_x

    def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        h, w, _ = input_shape
        return (h, w, self.c_out)


class MaxPool2D(Layer):
    """
    Non-overlapping max pooling (stride = pool size), trailing rows/columns
    that do not fill a window are dropped. Ties route to the first position
    of the window in row-major order.
    """

    def __init__(self, pool: Tuple[int, int] = (3, 3)):
        self.pool = (int(pool[0]), int(pool[1]))
        self._argmax: Optional[np.ndarray] = None
        self._in_shape: Optional[Tuple[int, ...]] = None

    def _windows(self, x: np.ndarray) -> np.ndarray:
        ph, pw = self.pool
        batch, h, w, c = x.shape
        ho, wo = h // ph, w // pw
        cropped = x[:, :ho * ph, :wo * pw, :]
        return cropped.reshape(batch, ho, ph, wo, pw, c).transpose(0, 1, 3, 5, 2, 4).reshape(batch, ho, wo, c, ph * pw)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4:
            raise ShapeMismatchError(f"MaxPool2D expects a 4-D input, got {x.shape}")
        ph, pw = self.pool
        if x.shape[1] < ph or x.shape[2] < pw:
            raise ShapeMismatchError(f"input {x.shape[1:3]} smaller than pool {self.pool}")
        self._in_shape = x.shape
        windows = self._windows(x)
        self._argmax = np.argmax(windows, axis=-1)
        return np.take_along_axis(windows, self._argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        ph, pw = self.pool
        batch, h, w, c = self._in_shape
        ho, wo = h // ph, w // pw
        routed = np.zeros((batch, ho, wo, c, ph * pw))
        np.put_along_axis(routed, self._argmax[..., None], grad_out[..., None], axis=-1)
        blocks = routed.reshape(batch, ho, wo, c, ph, pw).transpose(0, 1, 4, 2, 5, 3).reshape(batch, ho * ph, wo * pw, c)
        grad_x = np.zeros(self._in_shape)
        grad_x[:, :ho * ph, :wo * pw, :] = blocks
        return grad_x

    def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        h, w, c = input_shape
        return (h // self.pool[0], w // self.pool[1], c)


class Flatten(Layer):
    def __init__(self):
        self._in_shape: Optional[Tuple[int, ...]] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out.reshape(self._in_shape)

    def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return (int(np.prod(input_shape)),)


class Sequential:
    """Ordered stack of layers."""

    def __init__(self, layers: Sequence[Layer]):
        self.layers = list(layers)

    def parameters(self) -> List[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns the gradient w.r.t. the input."""
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def shape_trace(self, input_shape: Tuple[int, ...]) -> List[Tuple[int, ...]]:
        """Per-sample output shape after every layer."""
        shapes = []
        shape = tuple(input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
            shapes.append(shape)
        return shapes

    def dense_layers(self) -> List[Dense]:
        return [layer for layer in self.layers if isinstance(layer, Dense)]

    def get_state(self) -> List[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def set_state(self, state: Sequence[np.ndarray]) -> None:
        params = self.parameters()
        if len(state) != len(params):
            raise ShapeMismatchError(f"expected {len(params)} parameter arrays, got {len(state)}")
        for p, value in zip(params, state):
            value = np.asarray(value, dtype=np.float64)
            if value.size != p.size:
                raise ShapeMismatchError(f"parameter shape {p.shape} vs stored size {value.size}")
            p.data = value.reshape(p.shape).copy()
