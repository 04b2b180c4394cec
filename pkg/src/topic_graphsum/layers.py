"""Parameter initializers and small building blocks shared by the models."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, add, matmul


def uniform(rng: np.random.Generator, shape, bound: float) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    return uniform(rng, (fan_in, fan_out), float(np.sqrt(6.0 / (fan_in + fan_out))))


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def linear(x, W, b=None) -> Tensor:
    y = matmul(x, W)
    return y if b is None else add(y, b)
