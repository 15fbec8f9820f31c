"""Central-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def _scalar(out: Tensor) -> float:
    val = float(np.asarray(out.data).reshape(()))
    if not np.isfinite(val):
        raise FloatingPointError("function value is not finite")
    return val


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between the analytic gradient of ``f`` at ``x`` and
    central differences, relative to ``max(1, |numeric|)``."""
    x = Tensor(np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64), requires_grad=True)
    return grad_check_tensors(lambda: f(x), [x], eps)


def grad_check_tensors(f: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Like :func:`grad_check` for a closure over several leaf tensors.

    Each tensor is perturbed in place, one coordinate at a time.
    """
    for t in tensors:
        t.grad = None
        t.requires_grad = True
    out = f()
    _scalar(out)
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    worst = 0.0
    with no_grad():
        for t, ga in zip(tensors, analytic):
            flat = t.data.reshape(-1)
            gflat = ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                fp = _scalar(f())
                flat[i] = orig - eps
                fm = _scalar(f())
                flat[i] = orig
                num = (fp - fm) / (2 * eps)
                err = abs(gflat[i] - num) / max(1.0, abs(num))
                worst = max(worst, err)
    return worst
