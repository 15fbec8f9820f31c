"""Parameter groups, Adam with bias correction, and the step-decay schedule."""
from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor


class ParamGroup:
    """Named trainable tensors plus their Adam moments and step count."""

    def __init__(self, params: dict[str, Tensor] | None = None):
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        for name, t in (params or {}).items():
            self.add(name, t)

    def add(self, name: str, t: Tensor) -> Tensor:
        t.requires_grad = True
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def items(self):
        return self.params.items()

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in self.params.items()}

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def set_trainable(self, flag: bool):
        for t in self.params.values():
            t.requires_grad = flag


def adam_step(group: ParamGroup, grads: dict[str, np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> ParamGroup:
    """One bias-corrected Adam update of every parameter in ``group`` (in place)."""
    for name, g in grads.items():
        if name not in group.params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != group.params[name].shape:
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter "
                             f"{name!r} of shape {group.params[name].shape}")
    group.step += 1
    t = group.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, g in grads.items():
        m = group.m[name]
        v = group.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p = group.params[name]
        p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return group


def lr_schedule(base_lr: float, epoch: int, decay: float = 0.1, period: int = 3) -> float:
    """Step decay: ``base_lr * decay ** floor(epoch / period)``."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return base_lr * decay ** math.floor(epoch / period)
