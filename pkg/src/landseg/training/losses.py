"""Composite soft-dice + weighted BCE-with-logits loss over masked pixels.

Both terms are fused ops with hand-written gradients so a whole N×C×H×W
batch costs a handful of array passes.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..dataset.raster import DataError
from ..engine import Tensor, add, mul
from ..engine.functional import stable_sigmoid

log = logging.getLogger(__name__)

POS_WEIGHT_MODES = ("ones", "neg_over_pos")


class LossConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LossConfig:
    dice_weight: float = 0.5
    bce_weight: float = 0.5
    pos_weight_mode: str = "ones"
    pos_weight: tuple[float, ...] | None = None  # explicit p_c; overrides the mode
    element_weight: float = 1.0
    dice_eps: float = 1.0

    def __post_init__(self):
        if self.pos_weight_mode not in POS_WEIGHT_MODES:
            raise LossConfigError(f"pos_weight_mode must be one of {POS_WEIGHT_MODES}, got {self.pos_weight_mode!r}")
        if self.pos_weight is not None and any(not p > 0 for p in self.pos_weight):
            raise LossConfigError("every p_c must be positive")
        if self.dice_weight < 0 or self.bce_weight < 0:
            raise LossConfigError("loss weights must be non-negative")
        if self.dice_eps <= 0:
            raise LossConfigError("dice smoothing must be positive")

    def to_json(self) -> dict:
        d = asdict(self)
        if d["pos_weight"] is not None:
            d["pos_weight"] = list(d["pos_weight"])
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "LossConfig":
        doc = dict(doc)
        if doc.get("pos_weight") is not None:
            doc["pos_weight"] = tuple(float(v) for v in doc["pos_weight"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise LossConfigError(str(exc)) from None


def softplus(v: np.ndarray) -> np.ndarray:
    """log(1 + e^v) without overflow."""
    return np.maximum(v, 0) + np.log1p(np.exp(-np.abs(v)))


def _prep(y: Tensor, t, mask):
    t = np.asarray(t)
    if t.shape != y.shape:
        raise ValueError(f"targets {t.shape} do not match logits {y.shape}")
    n, c = y.shape[:2]
    m = np.ones((n,) + y.shape[2:], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != (n,) + y.shape[2:]:
        raise ValueError(f"mask {m.shape} does not match logits {y.shape}")
    count = int(m.sum())
    if count == 0:
        raise DataError("loss over an empty mask: no labeled pixels")
    return t.astype(y.dtype, copy=False), m[:, None].astype(y.dtype), count, c


def _class_vector(p, c: int, dtype) -> np.ndarray:
    if p is None:
        return np.ones(c, dtype=dtype)
    p = np.asarray(p, dtype=dtype).reshape(-1)
    if p.size != c:
        raise ValueError(f"pos weights have {p.size} entries for {c} classes")
    return p


def bce_with_logits(y: Tensor, t, p=None, mask=None, w: float = 1.0) -> Tensor:
    """Mean over masked elements and classes of
    ``w * (p_c t softplus(-y) + (1 - t) softplus(y))``."""
    t, m, count, c = _prep(y, t, mask)
    pc = _class_vector(p, c, y.dtype).reshape((1, c) + (1,) * (y.data.ndim - 2))
    yd = y.data
    scale = w / (count * c)
    loss = scale * float(np.sum(m * (pc * t * softplus(-yd) + (1 - t) * softplus(yd)), dtype=np.float64))

    def backward(g):
        s = stable_sigmoid(yd)
        return (g * scale * m * ((1 - t) * s - pc * t * (1 - s))).astype(yd.dtype, copy=False),

    return Tensor.from_op(np.asarray(loss, dtype=yd.dtype), (y,), backward, "bce_with_logits")


def soft_dice(y: Tensor, t, mask=None, eps: float = 1.0) -> Tensor:
    """Mean over classes of ``1 - (2 sum(s t) + eps) / (sum(s) + sum(t) + eps)``, s = sigmoid(y)."""
    t, m, _, c = _prep(y, t, mask)
    yd = y.data
    s = stable_sigmoid(yd)
    axes = (0,) + tuple(range(2, yd.ndim))
    sm = s * m
    inter = np.sum(sm * t, axis=axes, dtype=np.float64)
    denom = np.sum(sm, axis=axes, dtype=np.float64) + np.sum(t * m, axis=axes, dtype=np.float64) + eps
    num = 2 * inter + eps
    loss = float(np.mean(1 - num / denom))

    def backward(g):
        shape = (1, c) + (1,) * (yd.ndim - 2)
        dnum = (2 / denom).reshape(shape)
        dden = (num / denom ** 2).reshape(shape)
        ds = -(dnum * t - dden) / c
        return (g * ds * m * s * (1 - s)).astype(yd.dtype, copy=False),

    return Tensor.from_op(np.asarray(loss, dtype=yd.dtype), (y,), backward, "soft_dice")


def composite_loss(y: Tensor, t, cfg: LossConfig | None = None, mask=None, p=None) -> Tensor:
    cfg = cfg or LossConfig()
    if p is None and cfg.pos_weight is not None:
        p = cfg.pos_weight
    parts = []
    if cfg.dice_weight:
        parts.append(mul(soft_dice(y, t, mask, cfg.dice_eps), cfg.dice_weight))
    if cfg.bce_weight:
        parts.append(mul(bce_with_logits(y, t, p, mask, cfg.element_weight), cfg.bce_weight))
    if not parts:
        raise LossConfigError("both loss weights are zero")
    return parts[0] if len(parts) == 1 else add(parts[0], parts[1])


def pos_weights(positives, negatives=None, mode: str = "neg_over_pos") -> np.ndarray:
    """Per-class ``p_c = negatives / positives``; zero-positive classes get 1.

    ``positives`` and ``negatives`` are per-class counts. ``mode="ones"``
    returns all ones.
    """
    pos = np.asarray(positives, dtype=np.float64)
    if mode == "ones":
        return np.ones(pos.shape)
    if mode != "neg_over_pos":
        raise LossConfigError(f"unknown pos-weight mode {mode!r}")
    neg = np.asarray(negatives, dtype=np.float64)
    if np.any(pos < 0) or np.any(neg < 0):
        raise ValueError("label counts must be non-negative")
    out = np.ones(pos.shape)
    have = pos > 0
    out[have] = neg[have] / pos[have]
    # a class seen only as positive would give p_c = 0; keep it strictly positive
    out[have & (neg == 0)] = 1.0
    if not np.all(have):
        log.warning("pos_weights: %d class(es) with no positive samples get p_c = 1", int((~have).sum()))
    return out


def one_hot(indices: np.ndarray, num_classes: int, dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Dense-index grids (N, H, W) with -1 for unlabeled → (one-hot N×C×H×W, mask N×H×W)."""
    idx = np.asarray(indices)
    mask = idx >= 0
    t = np.zeros((idx.shape[0], num_classes) + idx.shape[1:], dtype=dtype)
    np.put_along_axis(t, np.where(mask, idx, 0)[:, None], 1, axis=1)
    t *= mask[:, None]
    return t, mask

