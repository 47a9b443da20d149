"""Parameter containers with stable hierarchical names."""

from __future__ import annotations

import math

import numpy as np

from . import ops
from .tensor import Tensor


class Module:
    """Minimal module tree.

    Child modules and parameters are discovered from instance attributes in
    assignment order; lists of modules are named by index. Names such as
    ``decoder.layers.0.self_attn.q.weight`` are the checkpoint keys.
    """

    training = True

    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for val in vars(self).values():
            if isinstance(val, Module):
                yield from val.modules()
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def astype(self, dtype):
        """Cast every parameter in place (float64 for gradient checks)."""
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for m in self.modules():
            m._on_cast(dtype)
        return self

    def _on_cast(self, dtype):
        pass

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {k: p.data for k, p in self.named_parameters()}

    def num_parameters(self):
        return int(sum(p.size for p in self.parameters()))


def param(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True, dtype=np.float32):
        bound = 1.0 / math.sqrt(d_in)
        self.weight = param(rng.uniform(-bound, bound, (d_in, d_out)).astype(dtype))
        self.bias = param(np.zeros(d_out, dtype=dtype)) if bias else None

    def __call__(self, x):
        y = ops.matmul(x, self.weight)
        return ops.add(y, self.bias) if self.bias is not None else y


class Conv2d(Module):
    def __init__(self, c_in, c_out, k, rng, stride=1, padding=0, bias=False, dtype=np.float32):
        fan_in = c_in * k * k
        std = math.sqrt(2.0 / fan_in)
        self.weight = param((rng.standard_normal((c_out, c_in, k, k)) * std).astype(dtype))
        self.bias = param(np.zeros(c_out, dtype=dtype)) if bias else None
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class LayerNorm(Module):
    def __init__(self, d, eps=1e-5, dtype=np.float32):
        self.gain = param(np.ones(d, dtype=dtype))
        self.bias = param(np.zeros(d, dtype=dtype))
        self.eps = eps

    def __call__(self, x):
        return ops.layer_norm(x, self.gain, self.bias, self.eps)


class GroupNorm(Module):
    def __init__(self, groups, channels, eps=1e-5, dtype=np.float32):
        self.groups = groups
        self.gain = param(np.ones(channels, dtype=dtype))
        self.bias = param(np.zeros(channels, dtype=dtype))
        self.eps = eps

    def __call__(self, x):
        return ops.group_norm(x, self.groups, self.gain, self.bias, self.eps)


class Embedding(Module):
    def __init__(self, n, d, rng, dtype=np.float32):
        self.weight = param((rng.standard_normal((n, d)) * d ** -0.5).astype(dtype))

    def __call__(self, ids):
        return ops.embedding(self.weight, ids)
