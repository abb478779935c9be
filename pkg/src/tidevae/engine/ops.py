"""Differentiable primitives over :class:`Tensor`.

Convolutions use im2col + one GEMM on the forward pass. The input gradient is
a stride-1 correlation of the zero-dilated output gradient with the flipped,
channel-swapped kernel (col2im scatter is kept as a fallback for pad >= k).
The transposed convolution is literally the input-gradient of ``conv2d`` and
vice versa.
"""

from __future__ import annotations

import contextlib
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, _local


class ShapeError(ValueError):
    pass


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


# ----------------------------------------------------------------------------
# raw numpy convolution kernels (cross-correlation, NCHW)

def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int, pad: int, ho: int, wo: int) -> np.ndarray:
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    n, c = x.shape[:2]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)


def _col2im(cols: np.ndarray, shape, k: int, stride: int, pad: int, ho: int, wo: int) -> np.ndarray:
    n, c, h, w = shape
    cols = cols.reshape(n, ho, wo, c, k, k)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if pad:
        out = out[:, :, pad:pad + h, pad:pad + w]
    return out


def conv2d_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int):
    """Returns (output without bias, im2col matrix)."""
    cout, _, k, _ = w.shape
    ho = conv_out_size(x.shape[2], k, stride, pad)
    wo = conv_out_size(x.shape[3], k, stride, pad)
    cols = _im2col(x, k, stride, pad, ho, wo)
    out = cols @ w.reshape(cout, -1).T
    return out.reshape(x.shape[0], ho, wo, cout).transpose(0, 3, 1, 2), cols


def conv2d_input_grad(dy: np.ndarray, w: np.ndarray, x_shape, stride: int, pad: int) -> np.ndarray:
    """Adjoint of conv2d w.r.t. its input.

    Computed as a stride-1 correlation of the zero-dilated, re-padded
    ``dy`` with the spatially flipped, channel-swapped kernel; falls back to
    col2im scatter when pad >= k.
    """
    cout, _, k, _ = w.shape
    n, _, ho, wo = dy.shape
    h, wd = x_shape[2], x_shape[3]
    off = k - 1 - pad
    if off < 0:
        dy_mat = dy.transpose(0, 2, 3, 1).reshape(-1, cout)
        return _col2im(dy_mat @ w.reshape(cout, -1), x_shape, k, stride, pad, ho, wo)
    if stride == 1 and h + k - 1 == ho + 2 * off and wd + k - 1 == wo + 2 * off:
        buf = np.pad(dy, ((0, 0), (0, 0), (off, off), (off, off)))
    else:
        buf = np.zeros((n, cout, h + k - 1, wd + k - 1), dtype=dy.dtype)
        buf[:, :, off:off + stride * ho:stride, off:off + stride * wo:stride] = dy
    flipped = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    out, _ = conv2d_forward(buf, flipped, 1, 0)
    return out


def conv2d_weight_grad(dy: np.ndarray, cols: np.ndarray, w_shape) -> np.ndarray:
    cout = w_shape[0]
    dy_mat = dy.transpose(0, 2, 3, 1).reshape(-1, cout)
    return (dy_mat.T @ cols).reshape(w_shape)


# ----------------------------------------------------------------------------
# network primitives

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape} and {weight.shape}")
    cout, cin, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d kernel must be square with odd size, got {k}x{k2}")
    if x.shape[1] != cin:
        raise ShapeError(f"conv2d channel mismatch: input has {x.shape[1]} channels, weight expects {cin}")
    if stride not in (1, 2) or pad < 0:
        raise ShapeError(f"conv2d needs stride in {{1, 2}} and pad >= 0, got stride={stride} pad={pad}")
    ho = conv_out_size(x.shape[2], k, stride, pad)
    wo = conv_out_size(x.shape[3], k, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output extent {ho}x{wo} is not positive for input {x.shape[2:]} and k={k}")
    out, cols = conv2d_forward(x.data, weight.data, stride, pad)
    if bias is not None:
        if bias.shape != (cout,):
            raise ShapeError(f"conv2d bias shape {bias.shape} != ({cout},)")
        out = out + bias.data.reshape(1, -1, 1, 1)
    x_shape, xw = x.shape, weight.data

    def backward_fn(g):
        gx = conv2d_input_grad(g, xw, x_shape, stride, pad) if x.requires_grad else None
        gw = conv2d_weight_grad(g, cols, xw.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward_fn, "conv2d")


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
                     pad: int = 0, output_pad: int = 0) -> Tensor:
    """Weight layout (Cin, Cout, k, k); output extent (H-1)*stride - 2*pad + k + output_pad."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError(f"conv_transpose2d expects 4-d input and weight, got {x.shape} and {weight.shape}")
    cin, cout, k, k2 = weight.shape
    if k != k2:
        raise ShapeError(f"conv_transpose2d kernel must be square, got {k}x{k2}")
    if x.shape[1] != cin:
        raise ShapeError(f"conv_transpose2d channel mismatch: input has {x.shape[1]}, weight expects {cin}")
    if output_pad >= stride or output_pad < 0:
        raise ShapeError(f"conv_transpose2d needs 0 <= output_pad < stride, got {output_pad} with stride {stride}")
    n, _, h, w = x.shape
    ho = (h - 1) * stride - 2 * pad + k + output_pad
    wo = (w - 1) * stride - 2 * pad + k + output_pad
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv_transpose2d output extent {ho}x{wo} is not positive")
    out_shape = (n, cout, ho, wo)
    out = conv2d_input_grad(x.data, weight.data, out_shape, stride, pad)
    if bias is not None:
        if bias.shape != (cout,):
            raise ShapeError(f"conv_transpose2d bias shape {bias.shape} != ({cout},)")
        out = out + bias.data.reshape(1, -1, 1, 1)
    xd, wd = x.data, weight.data

    def backward_fn(g):
        gx, cols = conv2d_forward(g, wd, stride, pad)
        gw = None
        if weight.requires_grad:
            x_mat = xd.transpose(0, 2, 3, 1).reshape(-1, cin)
            gw = (x_mat.T @ cols).reshape(wd.shape)
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return (gx if x.requires_grad else None), gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward_fn, "conv_transpose2d")


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense extent mismatch: input {x.shape} vs weight {weight.shape}")
    out = x.data @ weight.data
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise ShapeError(f"dense bias shape {bias.shape} != ({weight.shape[1]},)")
        out = out + bias.data
    xd, wd = x.data, weight.data

    def backward_fn(g):
        return (g @ wd.T if x.requires_grad else None,
                xd.T @ g if weight.requires_grad else None,
                g.sum(axis=0) if bias is not None else None)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward_fn, "dense")


@contextlib.contextmanager
def record_relu_masks():
    """Collect the on/off mask of every relu evaluated in the block (per thread).

    A central difference only measures the gradient when the perturbation
    leaves every mask unchanged; grad_check uses this to spot kink crossings.
    """
    prev = getattr(_local, "relu_masks", None)
    masks: list[np.ndarray] = []
    _local.relu_masks = masks
    try:
        yield masks
    finally:
        _local.relu_masks = prev


@contextlib.contextmanager
def freeze_relu_masks(masks: list[np.ndarray]):
    """Make the relus of the block reuse ``masks`` in evaluation order.

    The function then stays on one linear piece of the relu network, so a
    difference quotient across what would be a kink sees the slope backprop
    differentiates. The block must call relu exactly ``len(masks)`` times.
    """
    prev = getattr(_local, "relu_frozen", None)
    _local.relu_frozen = iter(masks)
    try:
        yield
    finally:
        _local.relu_frozen = prev


def relu(x: Tensor) -> Tensor:
    frozen = getattr(_local, "relu_frozen", None)
    if frozen is None:
        mask = x.data > 0
    else:
        mask = next(frozen, None)
        if mask is None or mask.shape != x.shape:
            raise RuntimeError("frozen relu masks do not match the evaluated graph")
    probe = getattr(_local, "relu_masks", None)
    if probe is not None:
        probe.append(mask)
    return Tensor.from_op(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,),
                          lambda g: (g * mask,), "relu")


def _log_sigmoid(a: np.ndarray) -> np.ndarray:
    # -log(1 + exp(-a)) = min(a, 0) - log1p(exp(-|a|))
    return np.minimum(a, 0) - np.log1p(np.exp(-np.abs(a)))


def _sigmoid(a: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, 1 / (1 + e), e / (1 + e))


def log_sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor.from_op(_log_sigmoid(xd), (x,), lambda g: (g * _sigmoid(-xd),), "log_sigmoid")


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "log_sigmoid":
        return log_sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def concat_channels(inputs: Sequence[Tensor]) -> Tensor:
    if not inputs:
        raise ShapeError("concat_channels needs at least one input")
    n, _, h, w = inputs[0].shape
    for i, t in enumerate(inputs):
        if t.data.ndim != 4 or (t.shape[0], t.shape[2], t.shape[3]) != (n, h, w):
            raise ShapeError(f"concat_channels input {i} has shape {t.shape}, expected (N={n}, *, {h}, {w})")
    if len(inputs) == 1:
        return Tensor.from_op(inputs[0].data, inputs, lambda g: (g,), "concat")
    splits = np.cumsum([t.shape[1] for t in inputs])[:-1]
    out = np.concatenate([t.data for t in inputs], axis=1)
    return Tensor.from_op(out, tuple(inputs), lambda g: tuple(np.split(g, splits, axis=1)), "concat")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return Tensor.from_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    return Tensor.from_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product of equal shapes."""
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return Tensor.from_op(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(x: Tensor, c: float) -> Tensor:
    return Tensor.from_op(x.data * x.dtype.type(c), (x,), lambda g: (g * g.dtype.type(c),), "scale")


def shift(x: Tensor, c: float) -> Tensor:
    return Tensor.from_op(x.data + x.dtype.type(c), (x,), lambda g: (g,), "shift")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out,), "exp")


def square(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor.from_op(xd * xd, (x,), lambda g: (2 * g * xd,), "square")


def reshape(x: Tensor, new_shape) -> Tensor:
    new_shape = tuple(int(s) for s in new_shape)
    if int(np.prod(new_shape)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} ({x.size} values) to {new_shape}")
    old = x.shape
    return Tensor.from_op(x.data.reshape(new_shape), (x,), lambda g: (g.reshape(old),), "reshape")


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], int(np.prod(x.shape[1:]))))


def sum(x: Tensor) -> Tensor:  # noqa: A001
    shape = x.shape
    return Tensor.from_op(np.asarray(x.data.sum(), dtype=x.dtype), (x,),
                          lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def mean(x: Tensor) -> Tensor:
    return scale(sum(x), 1.0 / x.size)


def global_avg_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C)."""
    n, c, h, w = x.shape
    inv = x.dtype.type(1.0 / (h * w))
    return Tensor.from_op(x.data.mean(axis=(2, 3)), (x,),
                          lambda g: (np.broadcast_to(g[:, :, None, None] * inv, (n, c, h, w)).copy(),), "gap")


def bce_with_logits(logits: Tensor, target: np.ndarray) -> Tensor:
    """Bernoulli negative log-likelihood of ``target`` under sigmoid(logits).

    Summed over every non-batch axis and averaged over the batch axis. Uses
    softplus(a) - t*a = max(a, 0) - t*a + log1p(exp(-|a|)), finite for all
    finite logits.
    """
    a = logits.data
    t = np.asarray(target, dtype=a.dtype)
    if t.shape != a.shape:
        raise ShapeError(f"bce_with_logits shape mismatch: {a.shape} vs {t.shape}")
    n = a.shape[0]
    per = np.maximum(a, 0) - t * a + np.log1p(np.exp(-np.abs(a)))
    out = np.asarray(per.sum() / n, dtype=a.dtype)

    def backward_fn(g):
        return ((_sigmoid(a) - t) * (g / n),)

    return Tensor.from_op(out, (logits,), backward_fn, "bce")
