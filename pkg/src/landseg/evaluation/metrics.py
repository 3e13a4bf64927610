"""Confusion matrices and per-level classification metrics."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..dataset.raster import DataError
from ..taxonomy import UNLABELED, ClcTaxonomy, default_taxonomy

log = logging.getLogger(__name__)

LEVELS = (1, 2, 3)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are truth, columns prediction, over ``classes`` (those with truth support).

    ``other[i]`` counts pixels of truth class ``classes[i]`` predicted as a
    class absent from ``classes``.
    """

    level: int
    classes: tuple[int, ...]
    counts: np.ndarray  # K×K int64
    other: np.ndarray  # K int64

    @property
    def total(self) -> int:
        return int(self.counts.sum() + self.other.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1) + self.other

    def with_other(self) -> np.ndarray:
        """K×(K+1) matrix with the out-of-set bucket as last column."""
        return np.concatenate([self.counts, self.other[:, None]], axis=1)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.level != other.level:
            raise ValueError("cannot merge confusion matrices of different levels")
        classes = tuple(sorted(set(self.classes) | set(other.classes)))
        pos = {c: i for i, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        out = np.zeros(len(classes), dtype=np.int64)
        # an "other" prediction in one part may name a class known to the merge; the
        # bucket does not record which, so merging is only exact over equal class sets
        if set(self.classes) != set(other.classes) and (self.other.any() or other.other.any()):
            raise ValueError("merging confusion matrices with different class sets loses bucket detail; "
                             "pool the pixels and recompute instead")
        for cm in (self, other):
            idx = np.array([pos[c] for c in cm.classes], dtype=np.int64)
            counts[np.ix_(idx, idx)] += cm.counts
            out[idx] += cm.other
        return ConfusionMatrix(self.level, classes, counts, out)


def project_grids(truth, pred, level: int, taxonomy: ClcTaxonomy | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Project both level-3 code grids to ``level``; unlabeled truth pixels become 0 in both."""
    taxonomy = taxonomy or default_taxonomy()
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape:
        raise ValueError(f"truth {truth.shape} and prediction {pred.shape} differ in shape")
    t = taxonomy.project_grid(truth, level)
    p = taxonomy.project_grid(pred, level)
    p = np.where(t == UNLABELED, UNLABELED, p)
    return t, p


def confusion(truth, pred, level: int = 3, classes=None) -> ConfusionMatrix:
    """Count (truth, prediction) pairs over labeled pixels of grids already projected to ``level``.

    The class axis is the sorted set of codes present in the labeled truth
    unless ``classes`` is given.
    """
    t = np.asarray(truth).reshape(-1)
    p = np.asarray(pred).reshape(-1)
    if t.shape != p.shape:
        raise ValueError("truth and prediction differ in size")
    keep = t != UNLABELED
    t, p = t[keep].astype(np.int64), p[keep].astype(np.int64)
    if classes is None:
        classes = np.unique(t)
    classes = np.asarray(sorted(int(c) for c in classes), dtype=np.int64)
    k = classes.size
    if t.size == 0:
        log.warning("confusion: no labeled pixels at level %d", level)
        return ConfusionMatrix(level, (), np.zeros((0, 0), np.int64), np.zeros(0, np.int64))
    ti = np.searchsorted(classes, t)
    if np.any(ti >= k) or np.any(classes[np.minimum(ti, k - 1)] != t):
        raise ValueError("truth contains classes outside the requested class axis")
    pi = np.searchsorted(classes, p)
    inside = (pi < k) & (classes[np.minimum(pi, k - 1)] == p)
    counts = np.bincount(ti[inside] * k + pi[inside], minlength=k * k).reshape(k, k).astype(np.int64)
    other = np.bincount(ti[~inside], minlength=k).astype(np.int64)
    return ConfusionMatrix(level, tuple(int(c) for c in classes), counts, other)


@dataclass(frozen=True)
class ClassRow:
    code: int
    support: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class LevelMetrics:
    level: int
    accuracy: float
    f1_macro: float
    f1_micro: float
    f1_weighted: float
    rows: tuple[ClassRow, ...] = field(default_factory=tuple)

    @property
    def total(self) -> int:
        return sum(r.support for r in self.rows)

    def to_json(self) -> dict:
        return {
            "level": self.level, "accuracy": self.accuracy, "f1_macro": self.f1_macro,
            "f1_micro": self.f1_micro, "f1_weighted": self.f1_weighted,
            "classes": [{"code": r.code, "support": r.support, "precision": r.precision,
                         "recall": r.recall, "f1": r.f1} for r in self.rows],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LevelMetrics":
        rows = tuple(ClassRow(**r) for r in doc["classes"])
        return cls(doc["level"], doc["accuracy"], doc["f1_macro"], doc["f1_micro"], doc["f1_weighted"], rows)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def metrics(cm: ConfusionMatrix) -> LevelMetrics:
    total = cm.total
    if total == 0:
        raise DataError(f"no labeled pixels to score at level {cm.level}")
    tp = np.diag(cm.counts).astype(np.float64)
    support = cm.support.astype(np.float64)
    predicted = cm.counts.sum(axis=0).astype(np.float64)
    precision = _ratio(tp, predicted)
    recall = _ratio(tp, support)
    f1 = _ratio(2 * precision * recall, precision + recall)
    trace = float(tp.sum())
    # pooled counts: every error is one FP and one FN somewhere
    f1_micro = 2 * trace / (2 * trace + (total - trace) + (total - trace))
    rows = tuple(ClassRow(c, int(s), float(p), float(r), float(f))
                 for c, s, p, r, f in zip(cm.classes, support, precision, recall, f1))
    return LevelMetrics(
        level=cm.level,
        accuracy=trace / total,
        f1_macro=float(f1.mean()),
        f1_micro=f1_micro,
        f1_weighted=float((f1 * support).sum() / support.sum()),
        rows=rows,
    )


def evaluate_levels(truth, pred, taxonomy: ClcTaxonomy | None = None,
                    levels=LEVELS) -> dict[int, LevelMetrics | None]:
    """Metrics at every level for level-3 code grids; ``None`` where nothing is labeled."""
    taxonomy = taxonomy or default_taxonomy()
    out = {}
    for level in levels:
        cm = confusion(*project_grids(truth, pred, level, taxonomy), level=level)
        out[level] = metrics(cm) if cm.total else None
    return out
