"""Numeric primitives: each training op comes as a forward/backward pair.

Batched tensors are channels-last (N, H, W, C). The single-image helpers
`conv2d` and `maxpool2` wrap the batched kernels for (H, W, C) inputs.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray):
    """3x3 stride-1 convolution with zero padding that preserves H and W.

    x: (N, H, W, C), kernels: (3, 3, C, F), bias: (F,).
    Returns (out (N, H, W, F), cols) where cols is the unrolled patch matrix
    kept for the backward pass.
    """
    if x.ndim != 4:
        raise ShapeError(f"conv input must be (N, H, W, C), got {x.shape}")
    kh, kw, kc, f = kernels.shape
    n, h, w, c = x.shape
    if (kh, kw) != (3, 3):
        raise ShapeError(f"conv kernels must be 3x3, got {kh}x{kw}")
    if kc != c:
        raise ShapeError(f"conv kernels expect {kc} input channels, input has {c}")
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (N, H, W, C, 3, 3)
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, 9 * c)
    out = cols @ kernels.reshape(9 * c, f) + bias
    return out.reshape(n, h, w, f), cols


def conv2d_backward(dout: np.ndarray, cols: np.ndarray, x_shape, kernels: np.ndarray):
    """Gradients of conv2d_forward w.r.t. input, kernels, and bias."""
    n, h, w, c = x_shape
    f = kernels.shape[3]
    dflat = dout.reshape(n * h * w, f)
    dk = (cols.T @ dflat).reshape(kernels.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ kernels.reshape(9 * c, f).T).reshape(n, h, w, 3, 3, c)
    dxp = np.zeros((n, h + 2, w + 2, c), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
    return dxp[:, 1:1 + h, 1:1 + w, :], dk, db


def conv2d(image: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Single-image convolution: (H, W, C) -> (H, W, F)."""
    if image.ndim != 3:
        raise ShapeError(f"expected an (H, W, C) image, got {image.shape}")
    out, _ = conv2d_forward(image[None], kernels, bias)
    return out[0]


def maxpool2_forward(x: np.ndarray):
    """2x2 stride-2 max pooling; odd trailing rows/cols are dropped.

    Returns (out (N, H//2, W//2, C), idx) where idx holds each window's argmax
    position in row-major window order (ties resolve to the first position).
    """
    if x.ndim != 4:
        raise ShapeError(f"pool input must be (N, H, W, C), got {x.shape}")
    n, h, w, c = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"pool needs spatial dims >= 2, got {x.shape}")
    h2, w2 = h // 2, w // 2
    win = x[:, : h2 * 2, : w2 * 2, :].reshape(n, h2, 2, w2, 2, c)
    win = win.transpose(0, 1, 3, 5, 2, 4).reshape(n, h2, w2, c, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2_backward(dout: np.ndarray, idx: np.ndarray, x_shape) -> np.ndarray:
    """Routes each pooled gradient to the window cell that produced the max."""
    n, h, w, c = x_shape
    h2, w2 = h // 2, w // 2
    scat = np.zeros((n, h2, w2, c, 4), dtype=dout.dtype)
    np.put_along_axis(scat, idx[..., None], dout[..., None], axis=-1)
    scat = scat.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, : h2 * 2, : w2 * 2, :] = scat.reshape(n, h2 * 2, w2 * 2, c)
    return dx


def maxpool2(image: np.ndarray) -> np.ndarray:
    """Single-image pooling: (H, W, C) -> (H//2, W//2, C)."""
    if image.ndim != 3:
        raise ShapeError(f"expected an (H, W, C) image, got {image.shape}")
    out, _ = maxpool2_forward(image[None])
    return out[0]


def relu_forward(x: np.ndarray):
    out = np.maximum(x, 0)
    return out, x > 0


def relu_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dout * mask


def dropout_forward(x: np.ndarray, rate: float, rng: np.random.Generator):
    """Inverted dropout: kept units are scaled by 1/(1-rate) at train time."""
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
    return x * mask, mask


def dropout_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dout * mask


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of (N, K) logits, shifted by the row max for stability."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
