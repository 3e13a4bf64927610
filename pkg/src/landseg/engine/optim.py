"""Adam optimizer and the step-decay learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import DimensionError, Tensor


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def ensure(self, params: Sequence[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(self.m) != len(params):
            raise DimensionError(f"optimizer tracks {len(self.m)} parameters, got {len(params)}")


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray | None], state: AdamState,
              lr: float) -> None:
    """One bias-corrected Adam update, applied in place.

    A ``None`` gradient leaves that parameter and its moments untouched, which
    is how frozen parameters are skipped.
    """
    state.ensure(params)
    if len(grads) != len(params):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for idx, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        m, v = state.m[idx], state.v[idx]
        if g.shape != p.shape or m.shape != p.shape:
            raise DimensionError(f"parameter {idx}: shape {p.shape}, grad {g.shape}, moment {m.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


class Adam:
    """Adam over a fixed list of parameter tensors."""

    def __init__(self, params: Sequence[Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(beta1, beta2, eps)

    def step(self, lr: float) -> None:
        grads = [p.grad if p.requires_grad else None for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state, lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass(frozen=True)
class LrSchedule:
    """Step decay: ``initial_lr * decay_factor ** (epoch // decay_every_epochs)``.

    From ``unfreeze_epoch`` on (when set), the rate is further multiplied by
    ``unfreeze_lr``.
    """

    initial_lr: float = 5e-4
    decay_factor: float = 0.5
    decay_every_epochs: int = 20
    unfreeze_lr: float = 0.1
    unfreeze_epoch: int | None = None

    def lr(self, epoch: int) -> float:
        lr = self.initial_lr * self.decay_factor ** math.floor(epoch / self.decay_every_epochs)
        if self.unfreeze_epoch is not None and epoch >= self.unfreeze_epoch:
            lr *= self.unfreeze_lr
        return lr
