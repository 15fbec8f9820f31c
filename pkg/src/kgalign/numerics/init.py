"""Parameter initialisers. All randomness comes from an explicit Generator."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def uniform_matrix(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)))


def embedding_table(rng: np.random.Generator, rows: int, dim: int) -> Tensor:
    # fan_in taken as the embedding width
    bound = 1.0 / np.sqrt(dim)
    return Tensor(rng.uniform(-bound, bound, size=(rows, dim)))


def zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape))


def ones(*shape) -> Tensor:
    return Tensor(np.ones(shape))
