"""Parameterised layers built on :mod:`mrgcn.autodiff.ops`."""

import numpy as np

from . import ops
from .tensor import Parameter


def init_normal(rng, shape, dtype=np.float64):
    """Standard normal N(0, 1) draws."""
    return rng.standard_normal(shape).astype(dtype)


def init_glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float64):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Module:
    """Minimal container: parameters are discovered from attributes."""

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class _Weighted(Module):
    """Shared logic for layers whose weights may be N(0,1) with a runtime gain.

    With ``init="normal"`` the stored weights are plain N(0, 1) draws and,
    when ``fan_in_gain`` is set, are multiplied by ``sqrt(gain_scale/fan_in)``
    on every forward pass so activations keep their scale through deep stacks
    (``gain_scale=2`` in front of a ReLU). ``fan_in`` may be overridden for
    sparse inputs such as one-hot characters, where only ``kernel`` of the
    ``channels * kernel`` inputs of a window are ever non-zero.
    """

    def _setup(self, shape, fan_in, fan_out, init, rng, dtype, bias, fan_in_gain, gain_scale=1.0,
               fan_in_override=None):
        if init == "normal":
            w = init_normal(rng, shape, dtype)
        elif init == "glorot":
            w = init_glorot_uniform(rng, shape, fan_in, fan_out, dtype)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Parameter(w, name="weight", init=init)
        self.bias = Parameter(np.zeros(shape[0] if len(shape) > 2 else shape[1], dtype=dtype), name="bias") if bias else None
        fan_in = fan_in_override or fan_in
        self.gain = np.sqrt(gain_scale / fan_in) if (fan_in_gain and init == "normal") else None

    def _effective_weight(self):
        if self.gain is None:
            return self.weight
        return ops.mul(self.weight, np.asarray(self.gain, dtype=self.weight.dtype))


class Dense(_Weighted):
    def __init__(self, n_in, n_out, rng, init="glorot", bias=True, fan_in_gain=False, dtype=np.float64,
                 gain_scale=1.0):
        self.n_in, self.n_out = n_in, n_out
        self._setup((n_in, n_out), n_in, n_out, init, rng, dtype, bias, fan_in_gain, gain_scale)

    def forward(self, x):
        out = ops.matmul(x, self._effective_weight())
        return out if self.bias is None else ops.add(out, self.bias)


class Conv1d(_Weighted):
    def __init__(self, in_channels, filters, kernel, padding, rng, init="normal", bias=True,
                 fan_in_gain=False, dtype=np.float64, gain_scale=1.0, fan_in=None):
        self.kernel, self.padding = kernel, padding
        self._setup((filters, in_channels, kernel), in_channels * kernel, filters * kernel,
                    init, rng, dtype, bias, fan_in_gain, gain_scale, fan_in)

    def forward(self, x):
        return ops.conv1d(x, self._effective_weight(), self.bias, self.padding)


class Conv2d(_Weighted):
    def __init__(self, in_channels, filters, kernel, padding, rng, init="normal", bias=True,
                 fan_in_gain=False, dtype=np.float64, gain_scale=1.0, fan_in=None):
        self.kernel, self.padding = kernel, padding
        self._setup((filters, in_channels, kernel, kernel), in_channels * kernel * kernel,
                    filters * kernel * kernel, init, rng, dtype, bias, fan_in_gain, gain_scale, fan_in)

    def forward(self, x):
        return ops.conv2d(x, self._effective_weight(), self.bias, self.padding)
