"""Numeric array type with reverse-mode automatic differentiation.

A `Tensor` wraps a numpy array (float32 for training, float64 for gradient
verification) plus an optional gradient buffer. Ops below build a tape;
calling `.backward()` on a scalar result fills `.grad` on every reachable
tensor with `requires_grad=True`.

Image tensors use the canonical N,C,H,W layout throughout the package.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from . import _convops


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward_fn=None):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=np.float64)
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward_fn = _backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Backpropagate from a scalar tensor, filling .grad on the tape."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.shape}")
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    # operator sugar; ops defined below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad and t._backward_fn is None:
        return
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad = t.grad + g


def _needs_tape(*ts: Tensor) -> bool:
    return any(t.requires_grad or t._backward_fn is not None for t in ts)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise ops


def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    try:
        out_data = a.data + b.data
    except ValueError as e:
        raise ValueError(f"add: incompatible shapes {a.shape} and {b.shape}") from e
    if not _needs_tape(a, b):
        return Tensor(out_data)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return Tensor(out_data, requires_grad=True, _parents=(a, b), _backward_fn=backward)


def sub(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    try:
        out_data = a.data - b.data
    except ValueError as e:
        raise ValueError(f"sub: incompatible shapes {a.shape} and {b.shape}") from e
    if not _needs_tape(a, b):
        return Tensor(out_data)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return Tensor(out_data, requires_grad=True, _parents=(a, b), _backward_fn=backward)


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    try:
        out_data = a.data * b.data
    except ValueError as e:
        raise ValueError(f"mul: incompatible shapes {a.shape} and {b.shape}") from e
    if not _needs_tape(a, b):
        return Tensor(out_data)

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return Tensor(out_data, requires_grad=True, _parents=(a, b), _backward_fn=backward)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0)
    if not _needs_tape(x):
        return Tensor(out_data)

    mask = x.data > 0  # subgradient at 0 is 0

    def backward(g):
        _accum(x, g * mask)

    return Tensor(out_data, requires_grad=True, _parents=(x,), _backward_fn=backward)


def sigmoid(x: Tensor) -> Tensor:
    out_data = _stable_sigmoid(x.data)
    if not _needs_tape(x):
        return Tensor(out_data)

    def backward(g):
        _accum(x, g * out_data * (1.0 - out_data))

    return Tensor(out_data, requires_grad=True, _parents=(x,), _backward_fn=backward)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# shape ops


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    out_data = x.data.reshape(shape)
    if not _needs_tape(x):
        return Tensor(out_data)

    def backward(g):
        _accum(x, g.reshape(x.shape))

    return Tensor(out_data, requires_grad=True, _parents=(x,), _backward_fn=backward)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out_data = np.ascontiguousarray(x.data.transpose(axes))
    if not _needs_tape(x):
        return Tensor(out_data)

    inv = np.argsort(axes)

    def backward(g):
        _accum(x, np.ascontiguousarray(g.transpose(inv)))

    return Tensor(out_data, requires_grad=True, _parents=(x,), _backward_fn=backward)


# ---------------------------------------------------------------------------
# reductions


def tsum(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.sum(), dtype=x.dtype)
    if not _needs_tape(x):
        return Tensor(out_data)

    def backward(g):
        _accum(x, np.full(x.shape, float(g), dtype=x.dtype))

    return Tensor(out_data, requires_grad=True, _parents=(x,), _backward_fn=backward)


def tmean(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.mean(), dtype=x.dtype)
    if not _needs_tape(x):
        return Tensor(out_data)

    n = x.data.size

    def backward(g):
        _accum(x, np.full(x.shape, float(g) / n, dtype=x.dtype))

    return Tensor(out_data, requires_grad=True, _parents=(x,), _backward_fn=backward)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements; shapes must match exactly."""
    if a.shape != b.shape:
        raise ValueError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    d = sub(a, b)
    return tmean(mul(d, d))


def mean_hw(x: Tensor) -> Tensor:
    """Global average pool: [N,C,H,W] -> [N,C]."""
    if x.ndim != 4:
        raise ValueError(f"mean_hw: expects 4-D input, got {x.shape}")
    out_data = x.data.mean(axis=(2, 3))
    if not _needs_tape(x):
        return Tensor(out_data)

    hw = x.shape[2] * x.shape[3]

    def backward(g):
        _accum(x, np.broadcast_to((g / hw)[:, :, None, None], x.shape).astype(x.dtype))

    return Tensor(out_data, requires_grad=True, _parents=(x,), _backward_fn=backward)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two 4-D tensors along the channel axis."""
    if a.ndim != 4 or b.ndim != 4:
        raise ValueError(f"concat_channels: expects 4-D inputs, got {a.shape}, {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"concat_channels: incompatible shapes {a.shape} and {b.shape}")
    out_data = np.concatenate([a.data, b.data], axis=1)
    if not _needs_tape(a, b):
        return Tensor(out_data)

    ca = a.shape[1]

    def backward(g):
        _accum(a, g[:, :ca])
        _accum(b, g[:, ca:])

    return Tensor(out_data, requires_grad=True, _parents=(a, b), _backward_fn=backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul: expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    out_data = a.data @ b.data
    if not _needs_tape(a, b):
        return Tensor(out_data)

    def backward(g):
        if a.requires_grad or a._backward_fn is not None:
            _accum(a, g @ b.data.T)
        if b.requires_grad or b._backward_fn is not None:
            _accum(b, a.data.T @ g)

    return Tensor(out_data, requires_grad=True, _parents=(a, b), _backward_fn=backward)


# ---------------------------------------------------------------------------
# convolution


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate x [N,Ci,H,W] with w [Co,Ci,k,k] plus per-channel bias.

    Output spatial size is (H + 2*padding - k) // stride + 1. The kernel must
    be square with odd side so that same-size padding k//2 is well defined.
    """
    _check_conv_args(x, w, stride, padding, op="conv2d", odd_kernel=True)
    if w.shape[1] != x.shape[1]:
        raise ValueError(
            f"conv2d: input has {x.shape[1]} channels but weight expects "
            f"{w.shape[1]} (input {x.shape}, weight {w.shape})"
        )
    out_data = _convops.conv_forward(x.data, w.data, stride, padding)
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ValueError(f"conv2d: bias shape {b.shape} != ({w.shape[0]},)")
        out_data = out_data + b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)
    if not _needs_tape(*parents):
        return Tensor(out_data)

    def backward(g):
        if x.requires_grad or x._backward_fn is not None:
            _accum(x, _convops.conv_transpose_forward(g, w.data, stride, padding, x.shape[2:]))
        if w.requires_grad or w._backward_fn is not None:
            _accum(w, _convops.conv_grad_w(x.data, g, stride, padding, w.shape))
        if b is not None and (b.requires_grad or b._backward_fn is not None):
            _accum(b, g.sum(axis=(0, 2, 3)))

    return Tensor(out_data, requires_grad=True, _parents=parents, _backward_fn=backward)


def deconv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution, the exact adjoint of conv2d.

    x is [N,Ci,h,w], w is [Ci,Co,k,k] (input channels first), output is
    [N,Co,H,W] with H = (h-1)*stride - 2*padding + k. Any kernel side >= 1 is
    accepted; even kernels are the usual choice for exact x2 upsampling.
    """
    _check_conv_args(x, w, stride, padding, op="deconv2d", odd_kernel=False)
    if w.shape[0] != x.shape[1]:
        raise ValueError(
            f"deconv2d: input has {x.shape[1]} channels but weight expects "
            f"{w.shape[0]} (input {x.shape}, weight {w.shape})"
        )
    k = w.shape[2]
    oh = _convops.deconv_out_size(x.shape[2], k, stride, padding)
    ow = _convops.deconv_out_size(x.shape[3], w.shape[3], stride, padding)
    if oh < 1 or ow < 1:
        raise ValueError(f"deconv2d: output size {(oh, ow)} is empty for input {x.shape}")
    out_data = _convops.conv_transpose_forward(x.data, w.data, stride, padding, (oh, ow))
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ValueError(f"deconv2d: bias shape {b.shape} != ({w.shape[1]},)")
        out_data = out_data + b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)
    if not _needs_tape(*parents):
        return Tensor(out_data)

    def backward(g):
        if x.requires_grad or x._backward_fn is not None:
            _accum(x, _convops.conv_forward(g, w.data, stride, padding))
        if w.requires_grad or w._backward_fn is not None:
            _accum(w, _convops.conv_grad_w(g, x.data, stride, padding, w.shape))
        if b is not None and (b.requires_grad or b._backward_fn is not None):
            _accum(b, g.sum(axis=(0, 2, 3)))

    return Tensor(out_data, requires_grad=True, _parents=parents, _backward_fn=backward)


def _check_conv_args(x: Tensor, w: Tensor, stride: int, padding: int, op: str, odd_kernel: bool):
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(f"{op}: expects 4-D input and weight, got {x.shape}, {w.shape}")
    kh, kw = w.shape[2], w.shape[3]
    if kh != kw or kh < 1:
        raise ValueError(f"{op}: kernel must be square and >= 1, got {kh}x{kw}")
    if odd_kernel and kh % 2 == 0:
        raise ValueError(f"{op}: kernel side must be odd, got {kh}")
    if stride < 1:
        raise ValueError(f"{op}: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"{op}: padding must be >= 0, got {padding}")
    if x.shape[2] < 1 or x.shape[3] < 1:
        raise ValueError(f"{op}: empty spatial input {x.shape}")


# ---------------------------------------------------------------------------
# classification losses


def bce_with_logits(logits: Tensor, targets: Tensor) -> Tensor:
    """Mean sigmoid cross-entropy, numerically stable for large logits.

    Logits are clamped to +-60 so infinite inputs still yield finite loss.
    """
    if logits.shape != targets.shape:
        raise ValueError(f"bce_with_logits: shape mismatch {logits.shape} vs {targets.shape}")
    z = np.clip(logits.data, -60.0, 60.0)
    t = targets.data
    loss = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    out_data = np.asarray(loss.mean(), dtype=logits.dtype)
    if not _needs_tape(logits):
        return Tensor(out_data)

    n = logits.data.size

    def backward(g):
        _accum(logits, (float(g) / n) * (_stable_sigmoid(z) - t))

    return Tensor(out_data, requires_grad=True, _parents=(logits,), _backward_fn=backward)


# ---------------------------------------------------------------------------
# initialization


def he_uniform(shape: Sequence[int], fan_in: int, rng: np.random.Generator, dtype=np.float32) -> Tensor:
    """Fan-in scaled uniform init for conv/deconv/linear weights."""
    bound = float(np.sqrt(6.0 / fan_in))
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def zeros(shape: Sequence[int], dtype=np.float32, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def parameters_size(params: Iterable[Tensor]) -> int:
    return sum(p.data.size for p in params)
