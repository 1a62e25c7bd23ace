"""Central finite-difference check of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


class DeterminismError(RuntimeError):
    pass


def numeric_gradient(f: Callable[[], Tensor], param: Tensor, eps: float) -> np.ndarray:
    flat = param.values.reshape(-1)
    out = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f().item()
        flat[i] = orig - eps
        fm = f().item()
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * eps)
    return out.reshape(param.shape)


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    return_details: bool = False,
):
    """Max relative error between tape gradients and central differences.

    ``f`` takes no arguments and reads the current values of ``params``.
    The relative error of an entry is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    first, second = f().item(), f().item()
    if first != second and not (np.isnan(first) and np.isnan(second)):
        raise DeterminismError(f"f returned {first!r} then {second!r}")

    saved = [p.grad for p in params]
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    backward(loss, tape)
    analytic = [p.grad.copy() for p in params]
    for p, g in zip(params, saved):
        p.grad = g

    worst = 0.0
    details = []
    for p, a in zip(params, analytic):
        n = numeric_gradient(f, p, eps)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        rel = np.abs(a - n) / denom
        err = float(rel.max()) if rel.size else 0.0
        details.append(err)
        worst = max(worst, err)
    if return_details:
        return worst, details
    return worst
