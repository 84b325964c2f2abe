"""
Layer kinds of the engine.  Each layer caches what its backward pass needs;
calling ``backward`` without a preceding ``forward`` raises ``StateError``.
Parameter gradients are accumulated into the owning ``ParamStore``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .params import ParamStore, ShapeError, xavier_init


class StateError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    channels: int = 0
    kernel: int = 0
    stride: int = 1
    units: int = 0
    pool: int = 0


class Layer:
    params: tuple[str, ...] = ()

    def __init__(self):
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        cache, self._cache = self._cache, None
        return cache

    def output_shape(self, shape: tuple) -> tuple:
        return shape


class Conv1D(Layer):
    """Valid cross-correlation; weights ``(C_out, C_in, K)``."""

    def __init__(self, store: ParamStore, name: str, in_channels: int, out_channels: int,
                 kernel: int, stride: int = 1, rng=None):
        super().__init__()
        self.store, self.stride, self.kernel = store, stride, kernel
        # first layer of a branch: the input gradient is never consumed
        self.input_grad = True
        self.in_channels, self.out_channels = in_channels, out_channels
        shape = (out_channels, in_channels, kernel)
        self.w = store.add(f"{name}.W", xavier_init(shape, rng))
        self.b = store.add(f"{name}.b", np.zeros(out_channels))
        self.params = (self.w, self.b)

    def output_shape(self, shape):
        c, length = shape
        if c != self.in_channels or length < self.kernel:
            raise ShapeError(
                f"{self.w}: input shape {shape} incompatible with kernel shape "
                f"{self.store[self.w].shape}"
            )
        return self.out_channels, (length - self.kernel) // self.stride + 1

    def forward(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        w = self.store[self.w]
        if x.ndim != 3 or x.shape[1] != w.shape[1] or x.shape[2] < w.shape[2]:
            raise ShapeError(f"{self.w}: input shape {x.shape} incompatible with weight shape {w.shape}")
        self._cache = x
        return backend.kernels.conv1d_forward(x, w, self.store[self.b], self.stride)

    @property
    def frozen(self) -> bool:
        return not (self.store.trainable[self.w] or self.store.trainable[self.b])

    def backward(self, grad):
        x = self._take_cache()
        if self.frozen and not self.input_grad:
            return None
        gx, gw, gb = backend.kernels.conv1d_backward(
            x, self.store[self.w], np.ascontiguousarray(grad, dtype=np.float64), self.stride, self.input_grad
        )
        self.store.grads[self.w] += gw
        self.store.grads[self.b] += gb
        return gx


class MaxPool1D(Layer):
    def __init__(self, pool: int, stride: int | None = None):
        super().__init__()
        self.pool, self.stride = pool, stride or pool

    def output_shape(self, shape):
        c, length = shape
        if length < self.pool:
            raise ShapeError(f"pool {self.pool} longer than input length {length}")
        return c, (length - self.pool) // self.stride + 1

    def forward(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        y, idx = backend.kernels.maxpool1d_forward(x, self.pool, self.stride)
        self._cache = (idx, x.shape[2])
        return y

    def backward(self, grad):
        idx, length = self._take_cache()
        return backend.kernels.maxpool1d_backward(np.ascontiguousarray(grad, dtype=np.float64), idx, length)


class Dense(Layer):
    """``y = x @ W + b`` with ``W`` of shape ``(in, out)``."""

    def __init__(self, store: ParamStore, name: str, in_units: int, out_units: int, rng=None):
        super().__init__()
        self.store, self.in_units, self.out_units = store, in_units, out_units
        self.w = store.add(f"{name}.W", xavier_init((in_units, out_units), rng))
        self.b = store.add(f"{name}.b", np.zeros(out_units))
        self.params = (self.w, self.b)

    def output_shape(self, shape):
        if shape != (self.in_units,):
            raise ShapeError(f"{self.w}: input shape {shape} but layer expects ({self.in_units},)")
        return (self.out_units,)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_units:
            raise ShapeError(f"{self.w}: input shape {x.shape} incompatible with weight shape {self.store[self.w].shape}")
        self._cache = x
        return x @ self.store[self.w] + self.store[self.b]

    def backward(self, grad):
        x = self._take_cache()
        self.store.grads[self.w] += x.T @ grad
        self.store.grads[self.b] += grad.sum(axis=0)
        return grad @ self.store[self.w].T


class ReLU(Layer):
    def forward(self, x):
        y = np.maximum(x, 0.0)
        self._cache = y
        return y

    def backward(self, grad):
        return grad * (self._take_cache() > 0)


class Flatten(Layer):
    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._take_cache())


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    def forward(self, x):
        p = softmax(np.asarray(x, dtype=np.float64))
        self._cache = p
        return p

    def backward(self, grad):
        p = self._take_cache()
        return p * (grad - (grad * p).sum(axis=-1, keepdims=True))


class Sequential(Layer):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)
        self.params = tuple(p for layer in self.layers for p in layer.params)

    def output_shape(self, shape):
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
            if grad is None:  # nothing upstream needs a gradient
                for earlier in self.layers:
                    earlier._cache = None
                break
        return grad


def build_layer(spec: LayerSpec, store: ParamStore, name: str, in_shape: tuple, rng) -> Layer:
    """Instantiate ``spec`` for an input of per-sample shape ``in_shape``."""
    kind = spec.kind.lower()
    if kind == "conv1d":
        return Conv1D(store, name, in_shape[0], spec.channels, spec.kernel, spec.stride, rng)
    if kind == "maxpool1d":
        return MaxPool1D(spec.pool, spec.stride if spec.stride > 1 else None)
    if kind == "dense":
        return Dense(store, name, in_shape[0], spec.units, rng)
    if kind == "relu":
        return ReLU()
    if kind == "flatten":
        return Flatten()
    if kind == "softmax":
        return Softmax()
    raise ValueError(f"unknown layer kind {spec.kind!r}")
