"""Differentiable primitives: convolution, instance norm, activations, concat,
row normalization, and small glue ops.

Every op runs eagerly on numpy arrays and, when a tape is open and any input
requires gradients, records a pull-back closure. Convolution is lowered to a
single GEMM over an im2col matrix; its backward reuses the cached columns.
"""

import numpy as np

from .errors import ContractError, DimensionError
from .tensor import Tensor, active_tape


def _result_dtype(*tensors):
    return np.float64 if any(t.data.dtype == np.float64 for t in tensors) else np.float32


def _tracked(*tensors):
    return active_tape() is not None and any(t.requires_grad for t in tensors)


def _emit(out_data, inputs, backward_fn):
    """Wrap op output; record the pull-back if gradients are being traced."""
    if _tracked(*inputs):
        out = Tensor(out_data, requires_grad=True, dtype=out_data.dtype)
        active_tape().record(out, backward_fn(out))
        return out
    return Tensor(out_data, dtype=out_data.dtype)


def _accum(tensor, grad):
    if tensor.requires_grad:
        tensor.grad += grad


# ---------------------------------------------------------------------------
# convolution

def _im2col(x, K, stride, padding):
    N, C, H, W = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (K, K), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    OH, OW = windows.shape[2], windows.shape[3]
    cols = windows.transpose(1, 4, 5, 0, 2, 3).reshape(C * K * K, N * OH * OW)
    return np.ascontiguousarray(cols), OH, OW


def _col2im(grad_cols, x_shape, K, stride, padding, OH, OW):
    """Scatter-add column gradients back onto the (padded) input."""
    N, C, H, W = x_shape
    gx = np.zeros((N, C, H + 2 * padding, W + 2 * padding), dtype=grad_cols.dtype)
    g = grad_cols.reshape(C, K, K, N, OH, OW)
    for ki in range(K):
        for kj in range(K):
            gx[:, :, ki:ki + stride * OH:stride, kj:kj + stride * OW:stride] += \
                g[:, ki, kj].transpose(1, 0, 2, 3)
    if padding:
        gx = gx[:, :, padding:-padding, padding:-padding]
    return gx


def _conv2d_backward(grad_out, cols, x_shape, w_data, stride, padding, OH, OW):
    """Gradients of conv2d w.r.t. input, weight, and bias."""
    O, C, K, _ = w_data.shape
    N = x_shape[0]
    grad_mat = grad_out.transpose(1, 0, 2, 3).reshape(O, N * OH * OW)
    gb = grad_out.sum(axis=(0, 2, 3))
    gw = (grad_mat @ cols.T).reshape(w_data.shape)
    grad_cols = w_data.reshape(O, -1).T @ grad_mat
    gx = _col2im(grad_cols, x_shape, K, stride, padding, OH, OW)
    return gx, gw, gb


def conv2d(x, weight, bias, stride=1, padding=0):
    """2-D convolution, NCHW input against OIKK weights plus per-channel bias.

    Output spatial size is floor((H + 2*padding - K)/stride) + 1 per axis.
    """
    if stride < 1:
        raise ContractError("conv2d stride must be >= 1, got %d" % stride)
    if padding < 0:
        raise ContractError("conv2d padding must be >= 0, got %d" % padding)
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError("conv2d", x.shape, weight.shape)
    N, C, H, W = x.shape
    O, IC, K, K2 = weight.shape
    if IC != C or K != K2:
        raise DimensionError("conv2d", x.shape, weight.shape)
    if bias.shape != (O,):
        raise DimensionError("conv2d bias", bias.shape, (O,))
    if H + 2 * padding < K or W + 2 * padding < K:
        raise DimensionError("conv2d: kernel larger than padded input", x.shape, weight.shape)

    dtype = _result_dtype(x, weight, bias)
    xd = x.data.astype(dtype, copy=False)
    wd = weight.data.astype(dtype, copy=False)
    cols, OH, OW = _im2col(xd, K, stride, padding)
    out_mat = wd.reshape(O, -1) @ cols + bias.data.astype(dtype, copy=False)[:, None]
    out_data = out_mat.reshape(O, N, OH, OW).transpose(1, 0, 2, 3)

    x_shape = xd.shape

    def make_backward(out):
        def fn(grad):
            gx, gw, gb = _conv2d_backward(grad, cols, x_shape, wd, stride, padding, OH, OW)
            _accum(x, gx)
            _accum(weight, gw)
            _accum(bias, gb)
        return fn

    return _emit(np.ascontiguousarray(out_data), (x, weight, bias), make_backward)


# ---------------------------------------------------------------------------
# normalization

def instance_norm2d(x, gamma, beta, eps=1e-5):
    """Normalize each (sample, channel) plane to zero mean / unit variance
    (population variance), then apply the per-channel affine.
    """
    if eps <= 0:
        raise ContractError("instance_norm2d eps must be > 0, got %g" % eps)
    if x.ndim != 4:
        raise DimensionError("instance_norm2d", x.shape)
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise DimensionError("instance_norm2d affine", gamma.shape, beta.shape, (C,))

    dtype = _result_dtype(x, gamma, beta)
    xd = x.data.astype(dtype, copy=False)
    mean = xd.mean(axis=(2, 3), keepdims=True)
    var = xd.var(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype))
    xhat = (xd - mean) * inv_std
    g = gamma.data.astype(dtype, copy=False)[None, :, None, None]
    b = beta.data.astype(dtype, copy=False)[None, :, None, None]
    out_data = xhat * g + b

    def make_backward(out):
        def fn(grad):
            if gamma.requires_grad:
                gamma.grad += (grad * xhat).sum(axis=(0, 2, 3))
            if beta.requires_grad:
                beta.grad += grad.sum(axis=(0, 2, 3))
            if x.requires_grad:
                gh = grad * g
                m1 = gh.mean(axis=(2, 3), keepdims=True)
                m2 = (gh * xhat).mean(axis=(2, 3), keepdims=True)
                x.grad += inv_std * (gh - m1 - xhat * m2)
        return fn

    return _emit(out_data, (x, gamma, beta), make_backward)


def l2_normalize(v, eps=1e-12):
    """Scale each row to unit Euclidean norm: v / sqrt(|v|^2 + eps).

    Accepts a flat vector or a batch of row vectors.
    """
    if eps <= 0:
        raise ContractError("l2_normalize eps must be > 0, got %g" % eps)
    if v.ndim not in (1, 2):
        raise DimensionError("l2_normalize", v.shape)

    vd = v.data
    flat = vd.ndim == 1
    rows = vd[None, :] if flat else vd
    sq = (rows * rows).sum(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(sq + np.asarray(eps, rows.dtype))
    out_rows = rows * inv
    out_data = out_rows[0] if flat else out_rows

    def make_backward(out):
        def fn(grad):
            grows = grad[None, :] if flat else grad
            dot = (grows * rows).sum(axis=1, keepdims=True)
            gv = inv * grows - rows * (dot * inv ** 3)
            _accum(v, gv[0] if flat else gv)
        return fn

    return _emit(out_data, (v,), make_backward)


# ---------------------------------------------------------------------------
# elementwise / structural

def leaky_relu(x, slope=0.2):
    """x for x >= 0, slope*x otherwise; the kink at 0 takes the positive branch."""
    if not 0 <= slope < 1:
        raise ContractError("leaky_relu slope must lie in [0, 1), got %g" % slope)
    mask = x.data >= 0
    scale = np.where(mask, np.asarray(1, x.data.dtype), np.asarray(slope, x.data.dtype))
    out_data = x.data * scale

    def make_backward(out):
        def fn(grad):
            _accum(x, grad * scale)
        return fn

    return _emit(out_data, (x,), make_backward)


def add(a, b):
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise DimensionError("add", a.shape, b.shape)
    dtype = _result_dtype(a, b)
    out_data = a.data.astype(dtype, copy=False) + b.data.astype(dtype, copy=False)

    def make_backward(out):
        def fn(grad):
            _accum(a, grad)
            _accum(b, grad)
        return fn

    return _emit(out_data, (a, b), make_backward)


def concat_channels(a, b):
    """Concatenate two NCHW tensors along channels; a's channels come first."""
    if a.ndim != 4 or b.ndim != 4:
        raise DimensionError("concat_channels", a.shape, b.shape)
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise DimensionError("concat_channels", a.shape, b.shape)
    dtype = _result_dtype(a, b)
    out_data = np.concatenate(
        [a.data.astype(dtype, copy=False), b.data.astype(dtype, copy=False)], axis=1)
    c1 = a.shape[1]

    def make_backward(out):
        def fn(grad):
            _accum(a, grad[:, :c1])
            _accum(b, grad[:, c1:])
        return fn

    return _emit(out_data, (a, b), make_backward)


def reshape(x, shape):
    out_data = x.data.reshape(shape)
    in_shape = x.shape

    def make_backward(out):
        def fn(grad):
            _accum(x, grad.reshape(in_shape))
        return fn

    return _emit(out_data, (x,), make_backward)


def sum_all(x):
    """Sum of all elements, as a scalar tensor."""
    out_data = np.asarray(x.data.sum(), x.data.dtype)

    def make_backward(out):
        def fn(grad):
            _accum(x, np.full(x.shape, grad.reshape(()), dtype=x.data.dtype))
        return fn

    return _emit(out_data, (x,), make_backward)


def gather_rows(x, indices):
    """Select rows of a 2-D tensor; duplicate indices accumulate gradients."""
    if x.ndim != 2:
        raise DimensionError("gather_rows", x.shape)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise ContractError("gather_rows needs a non-empty 1-D index list")
    if idx.min() < 0 or idx.max() >= x.shape[0]:
        raise ContractError("gather_rows index out of range for %d rows" % x.shape[0])
    out_data = x.data[idx]

    def make_backward(out):
        def fn(grad):
            if x.requires_grad:
                np.add.at(x.grad, idx, grad)
        return fn

    return _emit(out_data, (x,), make_backward)
