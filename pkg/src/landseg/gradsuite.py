"""Finite-difference suite over every differentiable primitive and the loss."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import engine as E
from .engine.gradcheck import away_from_zero_sampler, distinct_sampler, grad_check, make_rng, normal_sampler
from .training.losses import LossConfig, bce_with_logits, composite_loss, soft_dice

TOLERANCE = 1e-3


@dataclass(frozen=True)
class GradCase:
    name: str
    op: Callable[..., E.Tensor]
    shapes: tuple[tuple[int, ...], ...]
    sampler: object = normal_sampler


def _targets(shape, seed=7):
    rng = make_rng(seed)
    t = (rng.random(shape) < 0.4).astype(np.float64)
    mask = rng.random((shape[0],) + shape[2:]) < 0.75
    mask.flat[0] = True
    return t, mask


_T, _M = _targets((2, 3, 4, 4))
_P = np.array([0.5, 2.0, 3.0])


def _bn(x, g, b):
    c = x.shape[1]
    return E.batchnorm2d(x, g, b, np.zeros(c), np.ones(c), training=True)


def _bn_eval(x, g, b):
    c = x.shape[1]
    return E.batchnorm2d(x, g, b, np.linspace(-0.2, 0.2, c), np.linspace(0.5, 1.5, c), training=False)


CASES: tuple[GradCase, ...] = (
    GradCase("add", E.add, ((3, 4), (3, 4))),
    GradCase("add_broadcast", E.add, ((2, 3, 4), (3, 1))),
    GradCase("mul", E.mul, ((3, 4), (3, 4))),
    GradCase("mul_broadcast", E.mul, ((2, 3, 4), (4,))),
    GradCase("neg", E.neg, ((5,),)),
    GradCase("sum_all", E.sum_all, ((3, 4),)),
    GradCase("mean_all", E.mean_all, ((3, 4),)),
    GradCase("relu", E.relu, ((4, 5),), away_from_zero_sampler),
    GradCase("sigmoid", E.sigmoid, ((4, 5),)),
    GradCase("dropout", lambda x: E.dropout(x, 0.3, True, make_rng(5)), ((2, 3, 4, 4),)),
    GradCase("concat_channels", E.concat_channels, ((2, 2, 3, 3), (2, 3, 3, 3))),
    GradCase("upsample2x", E.upsample2x, ((2, 2, 3, 3),)),
    GradCase("avgpool2d", lambda x: E.avgpool2d(x, 2), ((2, 2, 4, 4),)),
    GradCase("conv2d_3x3", lambda x, w: E.conv2d(x, w, None, 1, 1), ((2, 3, 5, 5), (4, 3, 3, 3))),
    GradCase("conv2d_3x3_s2", lambda x, w: E.conv2d(x, w, None, 2, 1), ((2, 3, 6, 6), (4, 3, 3, 3))),
    GradCase("conv2d_1x1_bias", lambda x, w, b: E.conv2d(x, w, b, 1, 0), ((2, 3, 4, 4), (4, 3, 1, 1), (4,))),
    GradCase("conv2d_7x7_s2", lambda x, w: E.conv2d(x, w, None, 2, 3), ((1, 2, 8, 8), (3, 2, 7, 7))),
    GradCase("maxpool2d", lambda x: E.maxpool2d(x, 2, 2), ((2, 2, 4, 4),), distinct_sampler),
    GradCase("maxpool2d_3s2p1", lambda x: E.maxpool2d(x, 3, 2, 1), ((2, 2, 6, 6),), distinct_sampler),
    GradCase("batchnorm2d_train", _bn, ((3, 2, 3, 3), (2,), (2,))),
    GradCase("batchnorm2d_eval", _bn_eval, ((2, 2, 3, 3), (2,), (2,))),
    GradCase("bce_with_logits", lambda y: bce_with_logits(y, _T, _P, _M), ((2, 3, 4, 4),)),
    GradCase("soft_dice", lambda y: soft_dice(y, _T, _M), ((2, 3, 4, 4),)),
    GradCase("composite_loss", lambda y: composite_loss(y, _T, LossConfig(), _M, _P), ((2, 3, 4, 4),)),
)


@dataclass(frozen=True)
class GradResult:
    name: str
    max_error: float
    seeds: int

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def run_suite(seeds: Sequence[int] = range(20), cases: Sequence[GradCase] = CASES) -> tuple[list[GradResult], float]:
    """Worst relative error per case over ``seeds``; also returns wall time."""
    start = time.perf_counter()
    results = []
    for case in cases:
        worst = max(grad_check(case.op, case.shapes, seed, sampler=case.sampler) for seed in seeds)
        results.append(GradResult(case.name, worst, len(seeds)))
    return results, time.perf_counter() - start


def format_table(results: Sequence[GradResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'primitive':<{width}}  max_rel_err  status"]
    lines += [f"{r.name:<{width}}  {r.max_error:11.3e}  {'pass' if r.passed else 'FAIL'}" for r in results]
    return "\n".join(lines)
