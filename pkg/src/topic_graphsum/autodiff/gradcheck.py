"""Central finite-difference validation of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError
from .tensor import Tape, Tensor, no_grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(1, |a|) over coordinates."""
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))


def gradcheck(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare tape gradients of scalar ``f(*inputs)`` with central differences.

    ``max_coords`` limits how many coordinates are perturbed per input
    (chosen by ``rng``); the analytic gradient is still computed in full.
    Returns the max relative error over all checked coordinates.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ContractError(f"finite difference step {h} outside [1e-7, 1e-3]")
    leaves = [Tensor(x.data, requires_grad=True) for x in inputs]
    with Tape() as tape:
        out = f(*leaves)
        if out.size != 1:
            raise ContractError(f"gradcheck: f must return a scalar, got shape {out.shape}")
        grads = tape.backward(out, leaves)

    worst = 0.0
    for k, x in enumerate(inputs):
        base = np.array(x.data, dtype=np.float64)
        coords = np.arange(base.size)
        if max_coords is not None and base.size > max_coords:
            coords = np.sort((rng or np.random.default_rng(0)).choice(base.size, max_coords, replace=False))
        numeric = np.empty(coords.size)
        for n, c in enumerate(coords):
            vals = []
            for sign in (1.0, -1.0):
                pert = base.copy().reshape(-1)
                pert[c] += sign * h
                args = [Tensor(v.data) for v in inputs]
                args[k] = Tensor(pert.reshape(base.shape))
                with no_grad():
                    vals.append(f(*args).item())
            numeric[n] = (vals[0] - vals[1]) / (2.0 * h)
        worst = max(worst, relative_error(grads[k].reshape(-1)[coords], numeric))
    return worst


def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between the tape gradient of ``f`` at ``x`` and central differences."""
    return gradcheck(f, [x], h=h)
