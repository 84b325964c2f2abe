"""Minimal deterministic neural-network engine (numpy, optional compiled kernels)."""

from .backend import NAME as BACKEND
from .checkpoint import CheckpointError, load_into, read_checkpoint, save_checkpoint
from .layers import (
    Conv1D,
    Dense,
    Flatten,
    Layer,
    LayerSpec,
    MaxPool1D,
    ReLU,
    Sequential,
    Softmax,
    StateError,
    build_layer,
    softmax,
)
from .losses import InvalidLabelError, softmax_cross_entropy
from .params import InvalidShapeError, ParamStore, ShapeError, adam_step, xavier_init
from .training import EarlyStopping, early_stopping


def conv1d_forward(x, w, b, stride=1):
    """Single-sample or batched valid cross-correlation.

    ``x`` is ``(C_in, L)`` or ``(N, C_in, L)``; ``w`` is ``(C_out, C_in, K)``.
    """
    import numpy as np

    from . import backend

    x = np.asarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    single = x.ndim == 2
    xb = np.ascontiguousarray(x[None] if single else x)
    if w.ndim != 3 or xb.ndim != 3 or xb.shape[1] != w.shape[1] or xb.shape[2] < w.shape[2] or b.shape != (w.shape[0],):
        raise ShapeError(f"input shape {x.shape} incompatible with weight shape {w.shape} / bias {b.shape}")
    if stride < 1:
        raise ShapeError("stride must be >= 1")
    y = backend.kernels.conv1d_forward(xb, w, b, int(stride))
    return y[0] if single else y
