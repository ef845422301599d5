"""Adam with a cosine-annealed learning rate.

beta1=0.9, beta2=0.999, eps=1e-8, bias correction on. The schedule steps
once per optimizer step, decaying from lr0 to lr_min over total_steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import NumericalError, Tensor

__all__ = ["AdamState", "cosine_lr", "adam_step"]


class OptimizerError(RuntimeError):
    """Missing gradient, or schedule stepped past its horizon."""


def cosine_lr(t: int, total: int, lr0: float = 1e-4, lr_min: float = 1e-6) -> float:
    """lr_min + 0.5*(lr0 - lr_min)*(1 + cos(pi*t/total)).

    Evaluated as the convex combination w*lr0 + (1-w)*lr_min so the
    endpoints are bitwise exact: lr0 at t=0, lr_min at t=total.
    """
    if total < 1:
        raise OptimizerError(f"total steps must be >= 1, got {total}")
    if t < 0 or t > total:
        raise OptimizerError(f"step {t} outside schedule horizon [0, {total}]")
    w = 0.5 * (1.0 + np.cos(np.pi * t / total))
    return float(lr0 * w + lr_min * (1.0 - w))


@dataclass
class AdamState:
    """Per-parameter moments plus schedule position."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr0: float = 1e-4
    lr_min: float = 1e-6
    total_steps: int = 2000

    @classmethod
    def init(
        cls,
        params: dict[str, Tensor],
        lr0: float = 1e-4,
        lr_min: float = 1e-6,
        total_steps: int = 2000,
    ) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
            lr0=lr0,
            lr_min=lr_min,
            total_steps=total_steps,
        )


def adam_step(params: dict[str, Tensor], state: AdamState) -> float:
    """One bias-corrected Adam update at the current scheduled rate.

    Consumes gradients (cleared after the update). A NaN/Inf gradient
    aborts before any parameter is touched. Returns the lr that was used.
    """
    for name, p in params.items():
        if p.grad is None:
            raise OptimizerError(f"parameter {name} has no gradient")
        if not np.isfinite(p.grad).all():
            raise NumericalError(f"non-finite gradient for parameter {name}")
        if name not in state.m:
            raise OptimizerError(f"optimizer state missing parameter {name}")

    lr = cosine_lr(state.t, state.total_steps, state.lr0, state.lr_min)
    state.t += 1
    t = state.t
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad = None
    return lr
