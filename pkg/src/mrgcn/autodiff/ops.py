"""Differentiable operations on :class:`~mrgcn.autodiff.tensor.Tensor`.

Each op computes its forward value with numpy (or a kernel from
:mod:`mrgcn.autodiff.kernels`) and registers a closure mapping the output
gradient to one gradient per input.
"""

import numpy as np

from . import kernels
from .tensor import ShapeError, SparseMatrix, Tensor, as_tensor


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _pair(a, b):
    if not isinstance(a, Tensor):
        a = as_tensor(a, b.dtype if isinstance(b, Tensor) else None)
    if not isinstance(b, Tensor):
        b = as_tensor(b, a.dtype)
    return a, b


# --------------------------------------------------------------------------
# elementwise and shape ops
# --------------------------------------------------------------------------


def add(a, b):
    a, b = _pair(a, b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from None

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(out, (a, b), backward)


def mul(a, b):
    a, b = _pair(a, b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}") from None

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor.from_op(out, (a, b), backward)


def neg(a):
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,))


def relu(x):
    mask = x.data > 0
    return Tensor.from_op(x.data * mask, (x,), lambda g: (g * mask,))


def reshape(x, shape):
    original = x.shape
    return Tensor.from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(original),))


def flatten(x):
    return reshape(x, (x.shape[0], -1))


def sum_all(x):
    shape = x.shape
    return Tensor.from_op(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def concat_columns(tensors):
    """Concatenate 2-D tensors along the column axis."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat_columns needs at least one tensor")
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1 or any(t.ndim != 2 for t in tensors):
        raise ShapeError(f"concat_columns row mismatch: {[t.shape for t in tensors]}")
    widths = [t.shape[1] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=1)
    bounds = np.cumsum([0] + widths)

    def backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return Tensor.from_op(out, tensors, backward)


def index_rows(x, idx):
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.shape

    def backward(g):
        gx = np.zeros(shape, dtype=g.dtype)
        np.add.at(gx, idx, g)
        return (gx,)

    return Tensor.from_op(x.data[idx], (x,), backward)


def place_rows(base, pieces):
    """Write ``pieces`` into a copy of the constant array ``base``.

    ``pieces`` is a list of ``(rows, col_offset, tensor)``; the tensor's
    values land at ``out[rows, col_offset:col_offset + width]`` and receive
    the gradient from exactly that block.
    """
    out = np.array(base, copy=True)
    spans = []
    for rows, col, t in pieces:
        rows = np.asarray(rows, dtype=np.int64)
        width = t.shape[1]
        if t.shape[0] != rows.shape[0] or col + width > out.shape[1]:
            raise ShapeError(f"piece {t.shape} does not fit rows {rows.shape} at column {col} of {out.shape}")
        out[rows, col:col + width] = t.data
        spans.append((rows, col, width))

    def backward(g):
        return tuple(g[rows, col:col + width] for rows, col, width in spans)

    return Tensor.from_op(out, [t for _, _, t in pieces], backward)


# --------------------------------------------------------------------------
# products
# --------------------------------------------------------------------------


def matmul(a, b):
    """Matrix product with numpy broadcasting over leading axes."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (
            None if ga is None else _unbroadcast(ga, a.shape),
            None if gb is None else _unbroadcast(gb, b.shape),
        )

    return Tensor.from_op(out, (a, b), backward)


def sparse_matmul(s, x):
    """``S @ x`` for a constant :class:`SparseMatrix` ``S`` and dense ``x``."""
    if isinstance(s, np.ndarray):
        return matmul(Tensor(s.astype(x.dtype)), x)
    if not isinstance(s, SparseMatrix):
        raise TypeError(f"expected SparseMatrix, got {type(s).__name__}")
    if x.ndim != 2 or s.shape[1] != x.shape[0]:
        raise ShapeError(f"sparse_matmul shape mismatch: {s.shape} @ {x.shape}")
    out = kernels.csr_matmul(s.indptr, s.indices, s.data, x.data)

    def backward(g):
        st = s.T
        return (kernels.csr_matmul(st.indptr, st.indices, st.data, g),)

    return Tensor.from_op(out, (x,), backward)


def basis_combine(coefficients, bases):
    """Per-relation weights ``W[r] = sum_k coefficients[r, k] * bases[k]``."""
    if coefficients.ndim != 2 or bases.ndim != 3 or coefficients.shape[1] != bases.shape[0]:
        raise ShapeError(f"basis_combine shape mismatch: {coefficients.shape} and {bases.shape}")
    out = np.tensordot(coefficients.data, bases.data, axes=(1, 0))

    def backward(g):
        gc = np.tensordot(g, bases.data, axes=([1, 2], [1, 2]))
        gb = np.tensordot(coefficients.data, g, axes=(0, 0))
        return gc, gb

    return Tensor.from_op(out, (coefficients, bases), backward)


# --------------------------------------------------------------------------
# convolution and pooling
# --------------------------------------------------------------------------


def conv1d(x, w, b=None, padding=0):
    """Stride-1 convolution: x ``(N, C, L)``, w ``(F, C, k)``, b ``(F,)``."""
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d shape mismatch: input {x.shape}, weight {w.shape}")
    n, c, length = x.shape
    f, _, k = w.shape
    if length + 2 * padding < k:
        raise ShapeError(f"conv1d input length {length} too short for kernel {k} with padding {padding}")
    cols = kernels.im2col1d(x.data, k, padding)
    w2 = w.data.reshape(f, c * k)
    out = np.matmul(w2, cols)
    if b is not None:
        out += b.data[None, :, None]
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        cols = kernels.im2col1d(x.data, k, padding)
        gw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        gx = None
        if x.requires_grad:
            gx = kernels.col2im1d(np.matmul(w2.T, g), c, length, k, padding)
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    return Tensor.from_op(out, parents, backward)


def conv2d(x, w, b=None, padding=0):
    """Stride-1 convolution: x ``(N, C, H, W)``, w ``(F, C, kh, kw)``."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d shape mismatch: input {x.shape}, weight {w.shape}")
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ShapeError(f"conv2d input {h}x{wd} too small for kernel {kh}x{kw} with padding {padding}")
    ho, wo = h + 2 * padding - kh + 1, wd + 2 * padding - kw + 1
    cols = kernels.im2col2d(x.data, kh, kw, padding)
    w2 = w.data.reshape(f, c * kh * kw)
    out = np.matmul(w2, cols).reshape(n, f, ho, wo)
    if b is not None:
        out += b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        g2 = g.reshape(n, f, ho * wo)
        cols = kernels.im2col2d(x.data, kh, kw, padding)
        gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        gx = None
        if x.requires_grad:
            gx = kernels.col2im2d(np.matmul(w2.T, g2), c, h, wd, kh, kw, padding)
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return Tensor.from_op(out, parents, backward)


def maxpool1d(x, kernel, stride=None):
    stride = kernel if stride is None else stride
    if x.ndim != 3 or x.shape[2] < kernel:
        raise ShapeError(f"maxpool1d input {x.shape} shorter than kernel {kernel}")
    out, idx = kernels.maxpool1d(x.data, kernel, stride)
    length = x.shape[2]
    return Tensor.from_op(
        out, (x,), lambda g: (kernels.maxpool1d_backward(g, idx, length, kernel, stride),)
    )


def maxpool2d(x, kernel, stride=None):
    stride = kernel if stride is None else stride
    if x.ndim != 4 or x.shape[2] < kernel or x.shape[3] < kernel:
        raise ShapeError(f"maxpool2d input {x.shape} smaller than kernel {kernel}")
    out, idx = kernels.maxpool2d(x.data, kernel, stride)
    h, w = x.shape[2], x.shape[3]
    return Tensor.from_op(
        out, (x,), lambda g: (kernels.maxpool2d_backward(g, idx, h, w, kernel, stride),)
    )


def _adaptive_bins(length, size):
    return [((i * length) // size, -((-(i + 1) * length) // size)) for i in range(size)]


def adaptive_max_pool1d(x, size=1):
    """Max-pool ``(N, C, L)`` down to ``(N, C, size)`` for any ``L >= size``."""
    if x.ndim != 3 or x.shape[2] < size:
        raise ShapeError(f"adaptive_max_pool1d input {x.shape} shorter than output size {size}")
    bins = _adaptive_bins(x.shape[2], size)
    args = np.stack([x.data[:, :, s:e].argmax(axis=2) + s for s, e in bins], axis=2)
    out = np.take_along_axis(x.data, args, axis=2)
    shape = x.shape

    def backward(g):
        gx = np.zeros(shape, dtype=g.dtype)
        nn, cc, _ = np.indices(g.shape, sparse=True)
        np.add.at(gx, (nn, cc, args), g)
        return (gx,)

    return Tensor.from_op(out, (x,), backward)


def adaptive_avg_pool1d(x, size=1):
    if x.ndim != 3 or x.shape[2] < size:
        raise ShapeError(f"adaptive_avg_pool1d input {x.shape} shorter than output size {size}")
    bins = _adaptive_bins(x.shape[2], size)
    out = np.stack([x.data[:, :, s:e].mean(axis=2) for s, e in bins], axis=2)
    shape = x.shape

    def backward(g):
        gx = np.zeros(shape, dtype=g.dtype)
        for i, (s, e) in enumerate(bins):
            gx[:, :, s:e] += g[:, :, i:i + 1] / (e - s)
        return (gx,)

    return Tensor.from_op(out, (x,), backward)


# --------------------------------------------------------------------------
# softmax and loss
# --------------------------------------------------------------------------


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows(x):
    s = _softmax(x.data)

    def backward(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return Tensor.from_op(s, (x,), backward)


def log_softmax_rows(x):
    z = x.data - x.data.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=1, keepdims=True),)

    return Tensor.from_op(out, (x,), backward)


def cross_entropy(logits, labels, rows):
    """Mean negative log-probability of ``labels`` over the selected ``rows``."""
    rows = np.asarray(rows, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if rows.shape[0] == 0:
        raise ValueError("cross_entropy needs a non-empty mask")
    if labels.shape != rows.shape:
        raise ShapeError(f"labels {labels.shape} do not match mask {rows.shape}")
    c = logits.shape[1]
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c})")
    z = logits.data[rows]
    z = z - z.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    m = rows.shape[0]
    loss = -log_p[np.arange(m), labels].mean()
    shape = logits.shape

    def backward(g):
        local = np.exp(log_p)
        local[np.arange(m), labels] -= 1.0
        gx = np.zeros(shape, dtype=logits.dtype)
        np.add.at(gx, rows, local * (g / m))
        return (gx,)

    return Tensor.from_op(np.asarray(loss, dtype=logits.dtype), (logits,), backward)
