"""Named parameter storage, Xavier initialization and the Adam optimizer."""

from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    pass


class InvalidShapeError(ValueError):
    pass


def fans(shape) -> tuple[int, int]:
    """(fan_in, fan_out) for dense ``(in, out)`` or conv ``(out, in, k)`` shapes."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 2:
        fan_in, fan_out = shape
    elif len(shape) == 3:
        c_out, c_in, k = shape
        fan_in, fan_out = c_in * k, c_out * k
    else:
        raise InvalidShapeError(f"cannot derive fans from shape {shape}")
    if fan_in <= 0 or fan_out <= 0:
        raise InvalidShapeError(f"zero fan for shape {shape}")
    return fan_in, fan_out


def xavier_init(shape, seed) -> np.ndarray:
    """Glorot-uniform sample on ``±sqrt(6 / (fan_in + fan_out))``."""
    fan_in, fan_out = fans(shape)
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=tuple(shape))


class ParamStore:
    """Ordered named tensors with gradients, freeze flags and Adam state."""

    def __init__(self):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.trainable: dict[str, bool] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> str:
        if name in self.values:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.ascontiguousarray(value, dtype=np.float64)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        self.trainable[name] = trainable
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        return name

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, name):
        return self.values[name]

    def set_value(self, name: str, value) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.values[name].shape:
            raise ShapeError(f"{name}: expected shape {self.values[name].shape}, got {value.shape}")
        self.values[name][...] = value

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def reset_optimizer(self) -> None:
        for name in self.values:
            self.m[name].fill(0.0)
            self.v[name].fill(0.0)
        self.step = 0

    def count(self, trainable_only: bool = False) -> int:
        return sum(v.size for k, v in self.values.items() if self.trainable[k] or not trainable_only)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.values.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in snap.items():
            self.values[k][...] = v


def adam_step(params: ParamStore, grads=None, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-7) -> None:
    """One bias-corrected Adam update of every trainable tensor."""
    grads = params.grads if grads is None else grads
    for name, g in grads.items():
        if np.shape(g) != params.values[name].shape:
            raise ShapeError(f"{name}: gradient shape {np.shape(g)} != parameter shape {params.values[name].shape}")
    params.step += 1
    t = params.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, g in grads.items():
        if not params.trainable[name]:
            continue
        m, v = params.m[name], params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params.values[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
