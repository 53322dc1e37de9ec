"""NHWC kernels: same-padded convolution via im2col, 2x2 max pooling, dense, activations."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu6(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 6.0)


def activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return relu(z)
    if kind == "relu6":
        return relu6(z)
    if kind == "none":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(z: np.ndarray, dout: np.ndarray, kind: str) -> np.ndarray:
    """Backprop through an activation given its pre-activation input ``z``.

    The derivative is taken as 0 at the kinks (z == 0, and z == 6 for relu6).
    """
    if kind == "relu":
        return dout * (z > 0)
    if kind == "relu6":
        return dout * ((z > 0) & (z < 6))
    if kind == "none":
        return dout
    raise ValueError(f"unknown activation {kind!r}")


def same_padding(k: int) -> tuple[int, int]:
    # even kernels put the extra row/column after, as TF/Keras does
    before = (k - 1) // 2
    return before, k - 1 - before


def _pad(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    return np.pad(x, ((0, 0), same_padding(kh), same_padding(kw), (0, 0)))


def im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """(N, H, W, C) -> (N*H*W, kh*kw*C) patches for a same-padded, stride-1 conv."""
    n, h, w, c = x.shape
    windows = sliding_window_view(_pad(x, kh, kw), (kh, kw), axis=(1, 2))  # N,H,W,C,kh,kw
    return windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, kh * kw * c)


def col2im(cols: np.ndarray, shape: tuple[int, int, int, int], kh: int, kw: int) -> np.ndarray:
    """Adjoint of ``im2col``: scatter-add patch gradients back onto the input."""
    n, h, w, c = shape
    (pt, _), (pl, _) = same_padding(kh), same_padding(kw)
    dpad = np.zeros((n, h + kh - 1, w + kw - 1, c), dtype=cols.dtype)
    cols = cols.reshape(n, h, w, kh, kw, c)
    for i in range(kh):
        for j in range(kw):
            dpad[:, i : i + h, j : j + w, :] += cols[:, :, :, i, j, :]
    return dpad[:, pt : pt + h, pl : pl + w, :]


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Same-padded stride-1 convolution. ``weight`` is (kh, kw, C_in, C_out)."""
    kh, kw, cin, cout = weight.shape
    n, h, w, _ = x.shape
    cols = im2col(x, kh, kw)
    out = cols @ weight.reshape(-1, cout) + bias
    return out.reshape(n, h, w, cout), cols


def conv2d_backward(dout: np.ndarray, cols: np.ndarray, x_shape, weight: np.ndarray, need_dx: bool = True):
    kh, kw, cin, cout = weight.shape
    d2 = dout.reshape(-1, cout)
    dw = (cols.T @ d2).reshape(weight.shape)
    db = d2.sum(axis=0)
    dx = col2im(d2 @ weight.reshape(-1, cout).T, x_shape, kh, kw) if need_dx else None
    return dx, dw, db


def maxpool2x2_forward(x: np.ndarray):
    """2x2 max pooling with stride 2; odd trailing rows/columns are dropped."""
    n, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    blocks = x[:, : 2 * h2, : 2 * w2, :].reshape(n, h2, 2, w2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    blocks = blocks.reshape(n, h2, w2, c, 4)
    arg = blocks.argmax(axis=-1)  # first maximum wins on ties
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool2x2_backward(dout: np.ndarray, arg: np.ndarray, x_shape) -> np.ndarray:
    n, h, w, c = x_shape
    h2, w2 = h // 2, w // 2
    routed = np.zeros((n, h2, w2, c, 4), dtype=dout.dtype)
    np.put_along_axis(routed, arg[..., None], dout[..., None], axis=-1)
    routed = routed.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * h2, 2 * w2, c)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, : 2 * h2, : 2 * w2, :] = routed
    return dx
