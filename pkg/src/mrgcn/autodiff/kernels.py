"""Hot numeric kernels with two interchangeable backends.

Every scatter/reduce kernel exists as a numba ``@njit`` loop and as a
vectorised numpy routine; the im2col unfolds are plain strided copies and
use numpy under both backends. The numba path is used when numba imports cleanly and the
environment variable ``MRGCN_DISABLE_NUMBA`` is not set to a truthy value.
Both paths produce the same values up to floating point summation order.

Kernels:

* ``csr_matmul``     sparse (CSR) x dense product
* ``im2col1d`` / ``col2im1d``  sliding-window unfold for 1-D convolution
* ``im2col2d`` / ``col2im2d``  same for 2-D convolution
* ``maxpool1d`` / ``maxpool1d_backward``
* ``maxpool2d`` / ``maxpool2d_backward``
"""

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

_DISABLED = os.environ.get("MRGCN_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")
_backend = "numba" if (HAVE_NUMBA and not _DISABLED) else "numpy"


def get_backend():
    return _backend


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _backend = _backend, name
    return previous


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------


def _csr_matmul_np(indptr, indices, data, x):
    n_rows = indptr.shape[0] - 1
    out = np.zeros((n_rows, x.shape[1]), dtype=x.dtype)
    if indices.shape[0] == 0:
        return out
    prod = data[:, None] * x[indices]
    nonempty = np.diff(indptr) > 0
    out[nonempty] = np.add.reduceat(prod, indptr[:-1][nonempty], axis=0)
    return out


def _im2col1d_np(x, k, pad):
    n, c, _ = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = sliding_window_view(xp, k, axis=2)  # n, c, lout, k
    lout = win.shape[2]
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(n, c * k, lout)


def _col2im1d_np(cols, c, length, k, pad):
    n, _, lout = cols.shape
    blocks = cols.reshape(n, c, k, lout)
    dxp = np.zeros((n, c, length + 2 * pad), dtype=cols.dtype)
    for j in range(k):
        dxp[:, :, j:j + lout] += blocks[:, :, j, :]
    return dxp[:, :, pad:pad + length]


def _im2col2d_np(x, kh, kw, pad):
    n, c, _, _ = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # n, c, ho, wo, kh, kw
    ho, wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3))
    return cols.reshape(n, c * kh * kw, ho * wo)


def _col2im2d_np(cols, c, h, w, kh, kw, pad):
    n = cols.shape[0]
    ho = h + 2 * pad - kh + 1
    wo = w + 2 * pad - kw + 1
    blocks = cols.reshape(n, c, kh, kw, ho, wo)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for a in range(kh):
        for b in range(kw):
            dxp[:, :, a:a + ho, b:b + wo] += blocks[:, :, a, b]
    return dxp[:, :, pad:pad + h, pad:pad + w]


def _maxpool1d_np(x, k, s):
    win = sliding_window_view(x, k, axis=2)[:, :, ::s]  # n, c, lout, k
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    lout = win.shape[2]
    idx = arg + (np.arange(lout) * s)[None, None, :]
    return np.ascontiguousarray(out), idx.astype(np.int64)


def _maxpool1d_backward_np(grad, idx, length, overlapping):
    n, c, _ = grad.shape
    dx = np.zeros((n, c, length), dtype=grad.dtype)
    if overlapping:
        nn, cc, _ = np.indices(grad.shape, sparse=True)
        np.add.at(dx, (nn, cc, idx), grad)
    else:
        np.put_along_axis(dx, idx, grad, axis=2)
    return dx


def _maxpool2d_np(x, k, s):
    n, c, _, w = x.shape
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    ho, wo = win.shape[2], win.shape[3]
    flat = win.reshape(n, c, ho, wo, k * k)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    row = arg // k + (np.arange(ho) * s)[:, None]
    col = arg % k + (np.arange(wo) * s)[None, :]
    return np.ascontiguousarray(out), (row * w + col).astype(np.int64)


def _maxpool2d_backward_np(grad, idx, h, w, overlapping):
    n, c = grad.shape[:2]
    dx = np.zeros((n, c, h * w), dtype=grad.dtype)
    g = grad.reshape(n, c, -1)
    i = idx.reshape(n, c, -1)
    if overlapping:
        nn, cc, _ = np.indices(g.shape, sparse=True)
        np.add.at(dx, (nn, cc, i), g)
    else:
        np.put_along_axis(dx, i, g, axis=2)
    return dx.reshape(n, c, h, w)


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _csr_matmul_nb(indptr, indices, data, x):
        n_rows = indptr.shape[0] - 1
        k = x.shape[1]
        out = np.zeros((n_rows, k), dtype=x.dtype)
        for i in range(n_rows):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                v = data[p]
                for t in range(k):
                    out[i, t] += v * x[j, t]
        return out

    @njit(cache=True)
    def _col2im1d_nb(cols, c, length, k, pad):
        n, _, lout = cols.shape
        dx = np.zeros((n, c, length), dtype=cols.dtype)
        for b in range(n):
            for ch in range(c):
                for j in range(k):
                    row = ch * k + j
                    for o in range(lout):
                        i = o + j - pad
                        if 0 <= i < length:
                            dx[b, ch, i] += cols[b, row, o]
        return dx

    @njit(cache=True)
    def _col2im2d_nb(cols, c, h, w, kh, kw, pad):
        n = cols.shape[0]
        ho = h + 2 * pad - kh + 1
        wo = w + 2 * pad - kw + 1
        dx = np.zeros((n, c, h, w), dtype=cols.dtype)
        for b in range(n):
            for ch in range(c):
                for a in range(kh):
                    for e in range(kw):
                        row = (ch * kh + a) * kw + e
                        for oh in range(ho):
                            i = oh + a - pad
                            if i < 0 or i >= h:
                                continue
                            for ow in range(wo):
                                j = ow + e - pad
                                if 0 <= j < w:
                                    dx[b, ch, i, j] += cols[b, row, oh * wo + ow]
        return dx

    @njit(cache=True)
    def _maxpool1d_nb(x, k, s):
        n, c, length = x.shape
        lout = (length - k) // s + 1
        out = np.empty((n, c, lout), dtype=x.dtype)
        idx = np.empty((n, c, lout), dtype=np.int64)
        for b in range(n):
            for ch in range(c):
                for o in range(lout):
                    start = o * s
                    best = x[b, ch, start]
                    arg = start
                    for j in range(start + 1, start + k):
                        if x[b, ch, j] > best:
                            best = x[b, ch, j]
                            arg = j
                    out[b, ch, o] = best
                    idx[b, ch, o] = arg
        return out, idx

    @njit(cache=True)
    def _maxpool1d_backward_nb(grad, idx, length):
        n, c, lout = grad.shape
        dx = np.zeros((n, c, length), dtype=grad.dtype)
        for b in range(n):
            for ch in range(c):
                for o in range(lout):
                    dx[b, ch, idx[b, ch, o]] += grad[b, ch, o]
        return dx

    @njit(cache=True)
    def _maxpool2d_nb(x, k, s):
        n, c, h, w = x.shape
        ho = (h - k) // s + 1
        wo = (w - k) // s + 1
        out = np.empty((n, c, ho, wo), dtype=x.dtype)
        idx = np.empty((n, c, ho, wo), dtype=np.int64)
        for b in range(n):
            for ch in range(c):
                for oh in range(ho):
                    for ow in range(wo):
                        r0 = oh * s
                        c0 = ow * s
                        best = x[b, ch, r0, c0]
                        arg = r0 * w + c0
                        for a in range(k):
                            for e in range(k):
                                v = x[b, ch, r0 + a, c0 + e]
                                if v > best:
                                    best = v
                                    arg = (r0 + a) * w + c0 + e
                        out[b, ch, oh, ow] = best
                        idx[b, ch, oh, ow] = arg
        return out, idx

    @njit(cache=True)
    def _maxpool2d_backward_nb(grad, idx, h, w):
        n, c, ho, wo = grad.shape
        dx = np.zeros((n, c, h * w), dtype=grad.dtype)
        for b in range(n):
            for ch in range(c):
                for oh in range(ho):
                    for ow in range(wo):
                        dx[b, ch, idx[b, ch, oh, ow]] += grad[b, ch, oh, ow]
        return dx.reshape(n, c, h, w)


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------


def csr_matmul(indptr, indices, data, x):
    """Return ``S @ x`` for the CSR matrix ``S = (indptr, indices, data)``."""
    x = np.ascontiguousarray(x)
    data = data.astype(x.dtype, copy=False)
    if _backend == "numba":
        return _csr_matmul_nb(indptr, indices, data, x)
    return _csr_matmul_np(indptr, indices, data, x)


def im2col1d(x, k, pad):
    """Unfold ``(N, C, L)`` into ``(N, C*k, L + 2*pad - k + 1)`` columns."""
    # a strided copy: numpy's vectorised version beats a compiled loop, so both backends use it
    return _im2col1d_np(np.ascontiguousarray(x), k, pad)


def col2im1d(cols, c, length, k, pad):
    cols = np.ascontiguousarray(cols)
    if _backend == "numba":
        return _col2im1d_nb(cols, c, length, k, pad)
    return _col2im1d_np(cols, c, length, k, pad)


def im2col2d(x, kh, kw, pad):
    """Unfold ``(N, C, H, W)`` into ``(N, C*kh*kw, Ho*Wo)`` columns."""
    return _im2col2d_np(np.ascontiguousarray(x), kh, kw, pad)


def col2im2d(cols, c, h, w, kh, kw, pad):
    cols = np.ascontiguousarray(cols)
    if _backend == "numba":
        return _col2im2d_nb(cols, c, h, w, kh, kw, pad)
    return _col2im2d_np(cols, c, h, w, kh, kw, pad)


def maxpool1d(x, k, s):
    """Max over windows of size ``k`` with stride ``s``; returns (out, argmax)."""
    x = np.ascontiguousarray(x)
    if _backend == "numba":
        return _maxpool1d_nb(x, k, s)
    return _maxpool1d_np(x, k, s)


def maxpool1d_backward(grad, idx, length, k, s):
    grad = np.ascontiguousarray(grad)
    if _backend == "numba":
        return _maxpool1d_backward_nb(grad, idx, length)
    return _maxpool1d_backward_np(grad, idx, length, overlapping=k > s)


def maxpool2d(x, k, s):
    x = np.ascontiguousarray(x)
    if _backend == "numba":
        return _maxpool2d_nb(x, k, s)
    return _maxpool2d_np(x, k, s)


def maxpool2d_backward(grad, idx, h, w, k, s):
    grad = np.ascontiguousarray(grad)
    if _backend == "numba":
        return _maxpool2d_backward_nb(grad, idx, h, w)
    return _maxpool2d_backward_np(grad, idx, h, w, overlapping=k > s)
