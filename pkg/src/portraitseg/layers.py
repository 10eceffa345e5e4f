"""Network layer primitives with forward and backward passes.

Tensors throughout are rank-4 numpy float arrays laid out as
(batch, channels, height, width). Convolution is cross-correlation
(no kernel flip); all padding is zero padding. Every backward pass is
the exact gradient of its forward map, which the test suite checks
against central finite differences.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class ShapeError(ValueError):
    """Tensor shapes incompatible with the requested operation."""


def _require_tensor(x: np.ndarray, name: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{name} must be rank-4 (batch, channels, height, width), got shape {x.shape}")


def _sliding_windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Read-only view of all (kh, kw) windows at the given stride.

    Input (b, c, h, w) -> view (b, c, oh, ow, kh, kw).
    """
    b, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    sb, sc, sh, sw = x.strides
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(b, c, oh, ow, kh, kw),
        strides=(sb, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def _pad_spatial(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _scatter_windows(cols: np.ndarray, out_hw: tuple[int, int], stride: int) -> np.ndarray:
    """Accumulate per-pixel kernel stamps onto a spatial grid.

    cols has shape (b, h, w, c, kh, kw); each (kh, kw) stamp lands at
    origin (y*stride, x*stride) of a zeroed (b, c, *out_hw) array. Tap
    order is fixed, so summation is deterministic.
    """
    b, h, w, c, kh, kw = cols.shape
    out = np.zeros((b, c) + out_hw, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * h : stride, j : j + stride * w : stride] += (
                cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    return out


def conv_forward(
    x: np.ndarray, weights: np.ndarray, bias: np.ndarray, stride: int = 1, padding: int = 0
) -> np.ndarray:
    """Strided cross-correlation plus per-channel bias.

    weights: (out_channels, in_channels, kh, kw).
    Output spatial dims: floor((dim + 2*padding - k) / stride) + 1.
    """
    _require_tensor(x, "input")
    out_c, in_c, kh, kw = weights.shape
    if x.shape[1] != in_c:
        raise ShapeError(f"input has {x.shape[1]} channels, weights expect {in_c}")
    xp = _pad_spatial(x, padding)
    oh = (xp.shape[2] - kh) // stride + 1
    ow = (xp.shape[3] - kw) // stride + 1
    if xp.shape[2] < kh or xp.shape[3] < kw or oh < 1 or ow < 1:
        raise ShapeError(f"kernel {kh}x{kw} stride {stride} does not fit padded input {xp.shape[2]}x{xp.shape[3]}")
    win = _sliding_windows(xp, kh, kw, stride)
    out = np.tensordot(win, weights, axes=([1, 4, 5], [1, 2, 3]))  # (b, oh, ow, out_c)
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    out += bias[None, :, None, None]
    return out


def conv_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray, stride: int = 1, padding: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv_forward w.r.t. input, weights, and bias."""
    _require_tensor(grad_out, "grad_out")
    out_c, in_c, kh, kw = weights.shape
    xp = _pad_spatial(x, padding)
    oh = (xp.shape[2] - kh) // stride + 1
    ow = (xp.shape[3] - kw) // stride + 1
    if grad_out.shape != (x.shape[0], out_c, oh, ow):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match forward output {(x.shape[0], out_c, oh, ow)}")

    grad_bias = grad_out.sum(axis=(0, 2, 3))
    win = _sliding_windows(xp, kh, kw, stride)
    grad_weights = np.tensordot(grad_out, win, axes=([0, 2, 3], [0, 2, 3]))  # (out_c, in_c, kh, kw)

    cols = np.tensordot(grad_out.transpose(0, 2, 3, 1), weights, axes=([3], [0]))  # (b, oh, ow, in_c, kh, kw)
    grad_padded = _scatter_windows(cols, (xp.shape[2], xp.shape[3]), stride)
    p = padding
    grad_input = grad_padded[:, :, p : p + x.shape[2], p : p + x.shape[3]]
    return grad_input, grad_weights, grad_bias


def relu_forward(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass gradient where the forward input was positive; zero elsewhere."""
    if x.shape != grad_out.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match input shape {x.shape}")
    return grad_out * (x > 0)


class PoolIndices(NamedTuple):
    """Argmax bookkeeping from maxpool_forward, consumed by maxpool_backward."""

    input_shape: tuple[int, int, int, int]
    window: int
    stride: int
    argmax: np.ndarray  # (b, c, oh, ow), flat index into each window's row-major scan


def maxpool_forward(x: np.ndarray, window: int, stride: int) -> tuple[np.ndarray, PoolIndices]:
    """Per-window spatial maximum; ties go to the first cell in scan order."""
    _require_tensor(x, "input")
    if window < 1 or stride < 1:
        raise ShapeError(f"window and stride must be >= 1, got {window}, {stride}")
    b, c, h, w = x.shape
    if window > h or window > w:
        raise ShapeError(f"pool window {window} larger than input {h}x{w}")
    win = _sliding_windows(x, window, window, stride)
    flat = win.reshape(win.shape[:4] + (window * window,))
    argmax = flat.argmax(axis=4)  # first occurrence wins ties
    out = np.take_along_axis(flat, argmax[..., None], axis=4)[..., 0]
    return np.ascontiguousarray(out), PoolIndices((b, c, h, w), window, stride, argmax)


def maxpool_backward(indices: PoolIndices, grad_out: np.ndarray) -> np.ndarray:
    """Route gradient to each window's argmax cell; overlaps accumulate."""
    if grad_out.shape != indices.argmax.shape:
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match pooled shape {indices.argmax.shape}"
        )
    b, c, oh, ow = grad_out.shape
    ah, aw = np.divmod(indices.argmax, indices.window)
    bi, ci, hi, wi = np.indices((b, c, oh, ow), sparse=True)
    rows = hi * indices.stride + ah
    cols = wi * indices.stride + aw
    grad_input = np.zeros(indices.input_shape, dtype=grad_out.dtype)
    np.add.at(grad_input, (bi, ci, rows, cols), grad_out)
    return grad_input


def deconv_forward(
    x: np.ndarray, weights: np.ndarray, bias: np.ndarray, stride: int = 1, padding: int = 0
) -> np.ndarray:
    """Transposed convolution (learned upsampling).

    weights: (in_channels, out_channels, kh, kw).
    Output spatial dims: (dim - 1)*stride - 2*padding + k.
    """
    _require_tensor(x, "input")
    in_c, out_c, kh, kw = weights.shape
    if x.shape[1] != in_c:
        raise ShapeError(f"input has {x.shape[1]} channels, weights expect {in_c}")
    b, _, h, w = x.shape
    oh = (h - 1) * stride - 2 * padding + kh
    ow = (w - 1) * stride - 2 * padding + kw
    if oh < 1 or ow < 1:
        raise ShapeError(f"non-positive output dims {oh}x{ow} for input {h}x{w}")
    cols = np.tensordot(x.transpose(0, 2, 3, 1), weights, axes=([3], [0]))  # (b, h, w, out_c, kh, kw)
    padded = _scatter_windows(cols, (oh + 2 * padding, ow + 2 * padding), stride)
    p = padding
    out = np.ascontiguousarray(padded[:, :, p : p + oh, p : p + ow])
    out += bias[None, :, None, None]
    return out


def deconv_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray, stride: int = 1, padding: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of deconv_forward w.r.t. input, weights, and bias."""
    _require_tensor(grad_out, "grad_out")
    in_c, out_c, kh, kw = weights.shape
    b, _, h, w = x.shape
    oh = (h - 1) * stride - 2 * padding + kh
    ow = (w - 1) * stride - 2 * padding + kw
    if grad_out.shape != (b, out_c, oh, ow):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match forward output {(b, out_c, oh, ow)}")

    grad_bias = grad_out.sum(axis=(0, 2, 3))
    gp = _pad_spatial(grad_out, padding)
    # Window grid anchored at each input pixel's stamp origin.
    sb, sc, sh, sw = gp.strides
    gwin = np.lib.stride_tricks.as_strided(
        gp,
        shape=(b, out_c, h, w, kh, kw),
        strides=(sb, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )
    grad_weights = np.tensordot(x, gwin, axes=([0, 2, 3], [0, 2, 3]))  # (in_c, out_c, kh, kw)
    grad_input = np.tensordot(gwin, weights, axes=([1, 4, 5], [1, 2, 3]))  # (b, h, w, in_c)
    grad_input = np.ascontiguousarray(grad_input.transpose(0, 3, 1, 2))
    return grad_input, grad_weights, grad_bias


def softmax_probabilities(logits: np.ndarray) -> np.ndarray:
    """Per-pixel softmax over the channel axis, with max-subtraction."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_pixel_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean per-pixel softmax cross-entropy and its gradient w.r.t. logits.

    logits: (batch, 2, h, w); labels: (batch, h, w) with values in {0, 1}.
    The per-pixel losses are summed and divided by the total pixel count,
    so grad_logits = (softmax - one_hot) / pixel_count.
    """
    _require_tensor(logits, "logits")
    if logits.shape[1] != 2:
        raise ShapeError(f"logits must have exactly 2 channels, got {logits.shape[1]}")
    b, _, h, w = logits.shape
    if labels.shape != (b, h, w):
        raise ShapeError(f"labels shape {labels.shape} does not match logits spatial shape {(b, h, w)}")
    labels = np.asarray(labels)
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must contain only class indices 0 and 1")

    shifted = logits - logits.max(axis=1, keepdims=True)  # max-subtraction for stability
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_prob = shifted - np.log(total)

    n_pixels = b * h * w
    picked = np.take_along_axis(log_prob, labels[:, None, :, :].astype(np.intp), axis=1)
    loss = -float(picked.sum()) / n_pixels

    grad = exp / total
    one_hot_rows = (np.arange(2).reshape(1, 2, 1, 1) == labels[:, None, :, :])
    grad = (grad - one_hot_rows.astype(grad.dtype)) / grad.dtype.type(n_pixels)
    return loss, grad
