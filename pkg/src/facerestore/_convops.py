"""Low-level numpy conv/deconv routines backing the autodiff ops.

Everything here works on plain arrays in N,C,H,W layout and is shared by
forward passes and the corresponding gradient computations. Convolution is a
single einsum over a sliding-window view (no materialized im2col buffer);
the transposed convolution is zero-dilation + stride-1 correlation with the
flipped kernel, so it is the exact adjoint of `conv_forward`.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_PATH_CACHE: dict = {}


def _einsum(sub, a, b):
    key = (sub, a.shape, b.shape, a.dtype.char, b.dtype.char)
    path = _PATH_CACHE.get(key)
    if path is None:
        path = np.einsum_path(sub, a, b, optimize="optimal")[0]
        _PATH_CACHE[key] = path
    return np.einsum(sub, a, b, optimize=path)


def conv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def deconv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + k


def _windows(x, kh, kw, stride, padding):
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if x.shape[2] < kh or x.shape[3] < kw:
        raise ValueError(f"spatial input {x.shape[2:]} smaller than kernel {(kh, kw)} after padding")
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    if stride > 1:
        win = win[:, :, ::stride, ::stride]
    return win


def conv_forward(x, w, stride, padding):
    """Cross-correlation of x [N,Ci,H,W] with w [Co,Ci,kh,kw] -> [N,Co,Ho,Wo]."""
    win = _windows(x, w.shape[2], w.shape[3], stride, padding)
    return _einsum("ncijuv,ocuv->noij", win, w)


def conv_grad_w(x, grad_out, stride, padding, w_shape):
    """Weight gradient for y = conv_forward(x, w)."""
    win = _windows(x, w_shape[2], w_shape[3], stride, padding)
    return _einsum("noij,ncijuv->ocuv", grad_out, win)


def conv_transpose_forward(x, w, stride, padding, out_hw):
    """Adjoint of conv_forward with respect to its input.

    x: [N,Co,h,w] (plays the role of the conv output), w: [Co,Ci,kh,kw],
    returns [N,Ci,*out_hw]. out_hw must be a valid pre-image size, i.e.
    conv_out_size(out_hw, k, stride, padding) == (h, w).
    """
    n, co, h, w_ = x.shape
    kh, kw = w.shape[2], w.shape[3]
    if padding > kh - 1 or padding > kw - 1:
        raise ValueError(f"padding {padding} exceeds kernel-1 for kernel {kh}x{kw}")
    oh, ow = out_hw
    dh = (h - 1) * stride + 1
    dw = (w_ - 1) * stride + 1
    qt = kh - 1 - padding
    ql = kw - 1 - padding
    qb = oh - dh + padding
    qr = ow - dw + padding
    if qb < 0 or qr < 0:
        raise ValueError(f"target size {out_hw} too small for input {x.shape}")
    dil = np.zeros((n, co, dh + qt + qb, dw + ql + qr), dtype=x.dtype)
    dil[:, :, qt:qt + dh:stride, ql:ql + dw:stride] = x
    wf = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return conv_forward(dil, wf, 1, 0)
