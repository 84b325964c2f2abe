"""Pure-numpy reference kernels for 1-D convolution and max-pooling.

All arrays are float64, C-contiguous, batch-first: ``(N, C, L)``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x, k, stride):
    # (N, C, L_out, K) view
    return sliding_window_view(x, k, axis=2)[:, :, ::stride, :]


def conv1d_forward(x, w, b, stride):
    n, c_in, _ = x.shape
    c_out, _, k = w.shape
    cols = _windows(x, k, stride)
    l_out = cols.shape[2]
    cols = cols.transpose(0, 2, 1, 3).reshape(n * l_out, c_in * k)
    y = cols @ w.reshape(c_out, c_in * k).T + b
    return np.ascontiguousarray(y.reshape(n, l_out, c_out).transpose(0, 2, 1))


def conv1d_backward(x, w, grad_y, stride, input_grad=True):
    n, c_in, length = x.shape
    c_out, _, k = w.shape
    l_out = grad_y.shape[2]
    cols = _windows(x, k, stride).transpose(0, 2, 1, 3).reshape(n * l_out, c_in * k)
    gy = grad_y.transpose(0, 2, 1).reshape(n * l_out, c_out)
    grad_w = (gy.T @ cols).reshape(c_out, c_in, k)
    grad_b = gy.sum(axis=0)
    if not input_grad:
        return None, grad_w, grad_b
    gcols = (gy @ w.reshape(c_out, c_in * k)).reshape(n, l_out, c_in, k).transpose(0, 2, 1, 3)
    grad_x = np.zeros_like(x)
    span = stride * (l_out - 1) + 1
    for j in range(k):
        grad_x[:, :, j : j + span : stride] += gcols[:, :, :, j]
    return grad_x, grad_w, grad_b


def maxpool1d_forward(x, pool, stride):
    win = _windows(x, pool, stride)
    arg = win.argmax(axis=3)  # first maximum wins ties
    y = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]
    idx = arg + stride * np.arange(win.shape[2])[None, None, :]
    return np.ascontiguousarray(y), idx.astype(np.int64)


def maxpool1d_backward(grad_y, idx, length):
    n, c, _ = grad_y.shape
    grad_x = np.zeros((n, c, length))
    flat = (np.arange(n * c)[:, None] * length + idx.reshape(n * c, -1)).ravel()
    np.add.at(grad_x.reshape(-1), flat, grad_y.ravel())
    return grad_x
