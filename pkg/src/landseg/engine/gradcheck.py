"""Finite-difference verification of tape gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

Sampler = Callable[[np.random.Generator, tuple[int, ...]], np.ndarray]


def make_rng(*key: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by a tuple of integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def normal_sampler(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return rng.standard_normal(shape)


def away_from_zero_sampler(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Normal draws pushed at least 0.05 away from 0 (relu kink)."""
    x = rng.standard_normal(shape)
    return np.where(x >= 0, x + 0.05, x - 0.05)


def distinct_sampler(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Values spaced 0.05 apart in random order, so no two entries tie (max-pool kink)."""
    n = int(np.prod(shape))
    return (rng.permutation(n) * 0.05 - 0.025 * n).reshape(shape)


def numerical_gradient(f: Callable[[], float], arr: np.ndarray, h: float) -> np.ndarray:
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, floor).

    ``floor`` is 1e-3 of the largest numeric gradient magnitude, so entries
    that are tiny relative to the rest are judged on that scale instead of
    their own.
    """
    scale = float(np.max(np.abs(numeric))) if numeric.size else 0.0
    floor = max(1e-3 * scale, 1e-12)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if numeric.size else 0.0


def grad_check(op: Callable[..., Tensor], shapes: Sequence[tuple[int, ...]], seed: int, h: float = 1e-3,
               sampler: Sampler | Sequence[Sampler] = normal_sampler) -> float:
    """Max relative error between tape and central-difference gradients.

    ``op`` receives one float64 :class:`Tensor` per entry in ``shapes``. A
    non-scalar output is reduced with fixed random weights so every output
    element contributes.
    """
    rng = make_rng(seed)
    samplers = list(sampler) if isinstance(sampler, (list, tuple)) else [sampler] * len(shapes)
    arrays = [samplers[i](rng, tuple(s)).astype(np.float64) for i, s in enumerate(shapes)]
    probe = op(*[Tensor(a) for a in arrays])
    weights = rng.standard_normal(probe.shape)

    def objective() -> float:
        out = op(*[Tensor(a) for a in arrays])
        return float(np.sum(out.data * weights))

    inputs = [Tensor(a, requires_grad=True) for a in arrays]
    out = op(*inputs)
    out.backward(weights.astype(out.dtype))

    worst = 0.0
    for t, arr in zip(inputs, arrays):
        analytic = t.grad if t.grad is not None else np.zeros_like(arr)
        numeric = numerical_gradient(objective, arr, h)
        worst = max(worst, relative_error(analytic, numeric))
    return worst
