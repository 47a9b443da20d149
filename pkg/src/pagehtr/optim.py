"""ADAM without weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ShapeError


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state: AdamState, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8, t=None):
    """Apply one bias-corrected ADAM update in place.

    ``params`` and ``grads`` are name -> ndarray mappings. Moments missing
    from ``state`` start at zero. ``t`` defaults to ``state.t + 1``.
    Returns ``(params, state)``.
    """
    t = state.t + 1 if t is None else int(t)
    if t < 1:
        raise ContractError(f"adam step counter must be >= 1, got {t}")
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        elif m.shape != p.shape or v.shape != p.shape:
            raise ShapeError(f"optimizer state for {name} does not match parameter shape {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        step = (m / bc1) / (np.sqrt(v / bc2) + eps)
        p -= (lr * step).astype(p.dtype, copy=False)
        state.m[name] = m
        state.v[name] = v
    state.t = t
    return params, state


class Adam:
    """Optimizer over a model's named parameters (``Module.named_parameters``)."""

    def __init__(self, named_params, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8, warmup_steps=0):
        self.named = dict(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.warmup_steps = int(warmup_steps)
        self.state = AdamState()

    def current_lr(self):
        if self.warmup_steps and self.state.t < self.warmup_steps:
            return self.lr * (self.state.t + 1) / self.warmup_steps
        return self.lr

    def zero_grad(self):
        for p in self.named.values():
            p.grad = None

    def step(self):
        params = {k: p.data for k, p in self.named.items()}
        grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in self.named.items()}
        adam_step(params, grads, self.state, self.current_lr(), self.beta1, self.beta2, self.eps)
