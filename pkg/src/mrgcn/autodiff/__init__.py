"""Small numpy autodiff engine: tensors, sparse products, CNN layers, Adam."""

from . import kernels, ops
from .layers import Conv1d, Conv2d, Dense, Module
from .optim import Adam
from .tensor import Parameter, ShapeError, SparseMatrix, Tensor, no_grad

__all__ = [
    "Adam", "Conv1d", "Conv2d", "Dense", "Module", "Parameter", "ShapeError",
    "SparseMatrix", "Tensor", "kernels", "no_grad", "ops",
]
