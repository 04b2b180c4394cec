"""Adam with bias correction, as a pure function over parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import ContractError, ShapeError
from .ops import add, exp, mul
from .tensor import Tensor, as_tensor


@dataclass
class AdamState:
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Mapping[str, Tensor], **hyper) -> "AdamState":
        return cls(
            first_moment={k: np.zeros_like(p.data) for k, p in params.items()},
            second_moment={k: np.zeros_like(p.data) for k, p in params.items()},
            **hyper,
        )


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float | Mapping[str, float],
) -> tuple[dict[str, Tensor], AdamState]:
    """One Adam update. ``lr`` may be a scalar or a per-parameter mapping.

    Returns fresh parameter tensors and a fresh state; inputs are untouched.
    """
    t = state.step_count + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_params: dict[str, Tensor] = {}
    m_new: dict[str, np.ndarray] = {}
    v_new: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError("adam_step", [p.shape, g.shape, m.shape], f"parameter {name!r}")
        rate = lr[name] if isinstance(lr, Mapping) else lr
        if rate < 0:
            raise ContractError(f"adam_step: negative learning rate for {name!r}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        update = rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_params[name] = Tensor._wrap(p.data - update, p.requires_grad)
        m_new[name] = m
        v_new[name] = v
    new_state = AdamState(m_new, v_new, t, state.beta1, state.beta2, state.eps)
    return new_params, new_state


def gaussian_reparameterize(mu, log_sigma, noise) -> Tensor:
    """mu + exp(log_sigma) * noise, differentiable in mu and log_sigma."""
    mu, log_sigma, noise = as_tensor(mu), as_tensor(log_sigma), as_tensor(noise)
    if not (mu.shape == log_sigma.shape == noise.shape):
        raise ShapeError("gaussian_reparameterize", [mu.shape, log_sigma.shape, noise.shape])
    return add(mu, mul(exp(log_sigma), noise))


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; normals come from numpy's ziggurat sampler."""
    return np.random.Generator(np.random.PCG64(seed))
