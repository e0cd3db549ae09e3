"""Two-layer relational graph convolution with multimodal node features.

The first layer splits its input ``H0 = [I F]`` into a structural part and a
feature part::

    H1 = relu( sum_r A_r W_I[r] + A_r (F W_F[r]) + b1 )
    logits = sum_r A_r (H1 W_2[r]) + b2

``A_r I = A_r``, so the structural term is a sparse gather of rows of
``W_I[r]`` and the n x n identity is never built. All relations are handled
in one sparse product with the stacked adjacency ``[A_1 ... A_R]``.
"""

import warnings

import numpy as np

from .autodiff import ops
from .autodiff.layers import Module, init_glorot_uniform
from .autodiff.tensor import Parameter, ShapeError, SparseMatrix, Tensor


def _glorot(rng, shape, dtype):
    return init_glorot_uniform(rng, shape, shape[-2], shape[-1], dtype)


class BasisWeights(Module):
    """``W[r] = sum_k coefficients[r, k] * bases[k]`` for all relations at once."""

    def __init__(self, num_relations, num_bases, rows, cols, rng, dtype):
        if num_bases > num_relations:
            warnings.warn(f"{num_bases} bases for {num_relations} relations gives no compression", stacklevel=3)
        self.coefficients = Parameter(_glorot(rng, (num_relations, num_bases), dtype), name="coefficients")
        self.bases = Parameter(_glorot(rng, (num_bases, rows, cols), dtype), name="bases")

    def forward(self):
        return ops.basis_combine(self.coefficients, self.bases)


def compose_basis_weights(bases, coefficients, relation):
    """Weight matrix of one relation from bases ``(b, q, l)`` and coefficients ``(R, b)``."""
    if not isinstance(bases, Tensor):
        bases = Tensor(bases)
    if not isinstance(coefficients, Tensor):
        coefficients = Tensor(coefficients)
    if coefficients.shape[1] > coefficients.shape[0]:
        warnings.warn("more bases than relations gives no compression", stacklevel=2)
    full = ops.basis_combine(coefficients, bases)
    q, l = bases.shape[1:]
    return ops.reshape(ops.index_rows(full, [relation]), (q, l))


class MRGCN(Module):
    """Two R-GCN layers; the first consumes structure and optional features."""

    def __init__(self, num_nodes, num_relations, feature_dim, num_classes, hidden=16,
                 bases=None, bias=True, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n, self.R, self.f = num_nodes, num_relations, feature_dim
        self.hidden, self.num_classes = hidden, num_classes
        self.num_bases = bases
        R, n, f, h, c = num_relations, num_nodes, feature_dim, hidden, num_classes
        if bases:
            # structural and feature halves share one coefficient matrix, as
            # slices of the same basis over the concatenated input [I F]
            self.basis1 = BasisWeights(R, bases, n + f, h, rng, dtype)
            self.basis2 = BasisWeights(R, bases, h, c, rng, dtype)
        else:
            self.w_struct = Parameter(_glorot(rng, (R, n, h), dtype), name="w_struct", init="glorot")
            self.w_feat = Parameter(_glorot(rng, (R, f, h), dtype), name="w_feat", init="glorot") if f else None
            self.w_out = Parameter(_glorot(rng, (R, h, c), dtype), name="w_out", init="glorot")
        self.b1 = Parameter(np.zeros(h, dtype=dtype), name="b1") if bias else None
        self.b2 = Parameter(np.zeros(c, dtype=dtype), name="b2") if bias else None

    # -- weights -----------------------------------------------------------

    def layer1_weights(self):
        """``(W_I, W_F)`` with shapes ``(R, n, h)`` and ``(R, f, h)`` (W_F None if f == 0)."""
        if self.num_bases:
            full = self.basis1()
            w_i = _rows(full, 0, self.n)
            w_f = _rows(full, self.n, self.n + self.f) if self.f else None
            return w_i, w_f
        return self.w_struct, self.w_feat

    def layer2_weights(self):
        return self.basis2() if self.num_bases else self.w_out

    # -- forward -----------------------------------------------------------

    def _check_features(self, features):
        if self.f == 0:
            if features is not None and features.shape[1] != 0:
                raise ShapeError(f"model has no feature weights but got features {features.shape}")
            return None
        if features is None or features.shape != (self.n, self.f):
            got = None if features is None else features.shape
            raise ShapeError(f"features must have shape {(self.n, self.f)}, got {got}")
        return features

    def hidden_layer(self, stacked, features=None):
        """First graph convolution (pre-activation output summed over relations)."""
        if stacked.shape != (self.n, self.R * self.n):
            raise ShapeError(f"stacked adjacency {stacked.shape} does not match n={self.n}, R={self.R}")
        features = self._check_features(features)
        w_i, w_f = self.layer1_weights()
        out = ops.sparse_matmul(stacked, ops.reshape(w_i, (self.R * self.n, self.hidden)))
        if features is not None:
            xw = ops.matmul(features, w_f)  # (R, n, h)
            out = ops.add(out, ops.sparse_matmul(stacked, ops.reshape(xw, (self.R * self.n, self.hidden))))
        if self.b1 is not None:
            out = ops.add(out, self.b1)
        return ops.relu(out)

    def forward(self, stacked, features=None):
        """Split computation: structure as sparse gather, features as dense product."""
        h1 = self.hidden_layer(stacked, features)
        hw = ops.matmul(h1, self.layer2_weights())  # (R, n, c)
        logits = ops.sparse_matmul(stacked, ops.reshape(hw, (self.R * self.n, self.num_classes)))
        if self.b2 is not None:
            logits = ops.add(logits, self.b2)
        return logits

    def forward_standard(self, adjacencies, h0):
        """Plain per-relation convolution on an explicit ``H0`` of width n + f.

        ``adjacencies`` is one matrix per relation (SparseMatrix or dense
        array). Uses the same parameters as :meth:`forward` with
        ``W[r] = [W_I[r]; W_F[r]]``.
        """
        if len(adjacencies) != self.R:
            raise ShapeError(f"expected {self.R} adjacencies, got {len(adjacencies)}")
        if h0.shape != (self.n, self.n + self.f):
            raise ShapeError(f"H0 must have shape {(self.n, self.n + self.f)}, got {h0.shape}")
        w_i, w_f = self.layer1_weights()
        w2 = self.layer2_weights()
        h = None
        for r, a in enumerate(adjacencies):
            w_r = _relation(w_i, r)
            if w_f is not None:
                w_r = _vstack(w_r, _relation(w_f, r))
            term = ops.sparse_matmul(a, ops.matmul(h0, w_r))
            h = term if h is None else ops.add(h, term)
        if self.b1 is not None:
            h = ops.add(h, self.b1)
        h = ops.relu(h)
        out = None
        for r, a in enumerate(adjacencies):
            term = ops.sparse_matmul(a, ops.matmul(h, _relation(w2, r)))
            out = term if out is None else ops.add(out, term)
        if self.b2 is not None:
            out = ops.add(out, self.b2)
        return out

    def predict_proba(self, stacked, features=None):
        return ops.softmax_rows(self.forward(stacked, features))


def _relation(w, r):
    _, q, l = w.shape
    return ops.reshape(ops.index_rows(w, [r]), (q, l))


def _rows(w, start, stop):
    """Slice ``w[:, start:stop, :]`` differentiably."""
    R, q, l = w.shape
    flat = ops.reshape(w, (R * q, l))
    idx = (np.arange(R)[:, None] * q + np.arange(start, stop)[None, :]).ravel()
    return ops.reshape(ops.index_rows(flat, idx), (R, stop - start, l))


def _vstack(a, b):
    # [a; b] for 2-D tensors via transposed column concatenation
    return ops.reshape(ops.concat_columns([ops.reshape(a, (1, -1)), ops.reshape(b, (1, -1))]),
                       (a.shape[0] + b.shape[0], a.shape[1]))


def identity_features(n, features=None):
    """``H0 = [I F]`` as a dense array (only for small graphs)."""
    eye = np.eye(n)
    if features is None or features.shape[1] == 0:
        return eye
    return np.concatenate([eye, np.asarray(features)], axis=1)


def as_sparse(adjacency):
    if isinstance(adjacency, SparseMatrix):
        return adjacency
    return adjacency.to_sparse()
