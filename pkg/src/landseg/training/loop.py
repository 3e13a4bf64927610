"""Training loop: batches, schedule, freeze/unfreeze, checkpoints, log."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..dataset import AreaRaster, BandStats, PatchRef, materialize
from ..dataset.raster import DataError
from ..engine import Adam, Tensor, make_rng
from ..models.layers import Module
from ..models.transfer import save_model, set_frozen
from ..models.unet import BaselineUNet, center_crop, pool_labels
from ..taxonomy import ClcTaxonomy, default_taxonomy
from .losses import LossConfig, composite_loss, one_hot, pos_weights

log = logging.getLogger(__name__)


class TrainConfigError(ValueError):
    pass


class NumericAbort(RuntimeError):
    """Loss became NaN or infinite."""

    def __init__(self, epoch: int, batch: int, lr: float, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}, lr {lr:.3g}")
        self.epoch, self.batch, self.lr, self.value = epoch, batch, lr, value


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    initial_lr: float = 5e-4
    decay_factor: float = 0.5
    decay_every_epochs: int = 20
    freeze_encoder: bool = False
    unfreeze_epoch: int = 80
    unfreeze_lr_drop: float = 0.1
    augment: bool = True
    seed: int = 0
    checkpoint_every: int = 0  # 0: final checkpoint only

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise TrainConfigError("epochs and batch_size must be positive")
        if not self.initial_lr > 0:
            raise TrainConfigError("initial_lr must be positive")
        if self.decay_every_epochs < 1:
            raise TrainConfigError("decay_every_epochs must be positive")
        if self.checkpoint_every < 0:
            raise TrainConfigError("checkpoint_every must be >= 0")

    @property
    def unfreezes(self) -> bool:
        return self.freeze_encoder and self.unfreeze_epoch < self.epochs

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: Mapping) -> "TrainConfig":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise TrainConfigError(str(exc)) from None


def lr_at(cfg: TrainConfig, epoch: int, frozen_phase: bool | None = None) -> float:
    """Step decay, with the unfreeze drop applied from ``unfreeze_epoch`` on.

    ``frozen_phase`` says whether the run uses the freeze/unfreeze regimen
    (defaults to ``cfg.freeze_encoder``).
    """
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    lr = cfg.initial_lr * cfg.decay_factor ** (epoch // cfg.decay_every_epochs)
    regimen = cfg.freeze_encoder if frozen_phase is None else frozen_phase
    if regimen and epoch >= cfg.unfreeze_epoch:
        lr *= cfg.unfreeze_lr_drop
    return lr


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    lr: float
    frozen: bool
    wall_time: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, rec: EpochRecord) -> None:
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise ValueError("epochs must be strictly increasing")
        self.records.append(rec)

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.records]

    def __len__(self) -> int:
        return len(self.records)

    def to_ndjson(self) -> str:
        return "".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in self.records)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_ndjson())
        return path

    @classmethod
    def load(cls, path) -> "TrainLog":
        out = cls()
        for line in Path(path).read_text().splitlines():
            if line.strip():
                out.append(EpochRecord(**json.loads(line)))
        return out


@dataclass
class TrainingSet:
    """Patch refs plus everything needed to materialize them."""

    refs: Sequence[PatchRef]
    areas: Mapping[str, AreaRaster]
    stats: BandStats
    taxonomy: ClcTaxonomy = field(default_factory=default_taxonomy)

    def __len__(self) -> int:
        return len(self.refs)


def model_inputs(model: Module, x: np.ndarray) -> np.ndarray:
    """Crop a patch batch to what the model consumes."""
    size = model.input_size
    return np.ascontiguousarray(center_crop(x, size)) if x.shape[-1] != size else x


def model_targets(model: Module, y: np.ndarray) -> np.ndarray:
    """Code grids (N, H, W) on the model's output grid."""
    if isinstance(model, BaselineUNet):
        cfg = model.config
        return np.stack([pool_labels(g, cfg.input_size, cfg.output_pool) for g in y])
    size = model.input_size
    return np.ascontiguousarray(center_crop(y, size)) if y.shape[-1] != size else y


def batch_arrays(model: Module, data: TrainingSet, refs: Sequence[PatchRef],
                 elements: Sequence[int | None]) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = zip(*(materialize(r, data.areas, data.stats, augment=e) for r, e in zip(refs, elements)))
    return model_inputs(model, np.stack(xs)), model_targets(model, np.stack(ys))


def class_counts(model: Module, data: TrainingSet) -> tuple[np.ndarray, np.ndarray]:
    """Per-class positive and negative labeled-pixel counts on the model's target grid."""
    c = model.num_classes
    pos = np.zeros(c, dtype=np.int64)
    total = 0
    for ref in data.refs:
        _, y = materialize(ref, data.areas, data.stats)
        idx = data.taxonomy.indices(model_targets(model, y[None]))
        idx = idx[idx >= 0]
        pos += np.bincount(idx, minlength=c)[:c]
        total += idx.size
    return pos, total - pos


def fit(model: Module, data: TrainingSet, cfg: TrainConfig | None = None, loss_cfg: LossConfig | None = None,
        out_dir: str | Path | None = None, progress=None) -> tuple[Module, TrainLog]:
    """Train in place; returns the model and its per-epoch log.

    With ``freeze_encoder`` the encoder stays frozen for epochs below
    ``unfreeze_epoch``. Checkpoints go to ``out_dir`` every
    ``checkpoint_every`` epochs and after the last one.
    """
    cfg = cfg or TrainConfig()
    loss_cfg = loss_cfg or LossConfig()
    if not len(data):
        raise DataError("fit: empty training set")
    if model.num_classes != data.taxonomy.size:
        raise TrainConfigError(f"model has {model.num_classes} classes, taxonomy has {data.taxonomy.size}")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    if loss_cfg.pos_weight is not None:
        p = np.asarray(loss_cfg.pos_weight)
    elif loss_cfg.pos_weight_mode == "ones":
        p = None
    else:
        p = pos_weights(*class_counts(model, data), mode=loss_cfg.pos_weight_mode)

    model.set_rng(make_rng(cfg.seed, 11))
    frozen = cfg.freeze_encoder
    set_frozen(model, frozen)
    model.train()
    opt = Adam(model.parameters())
    trainlog = TrainLog()
    refs = list(data.refs)
    n = len(refs)

    for epoch in range(cfg.epochs):
        if frozen and epoch >= cfg.unfreeze_epoch:
            frozen = False
            set_frozen(model, False)
            log.info("epoch %d: encoder unfrozen", epoch)
        lr = lr_at(cfg, epoch)
        rng = make_rng(cfg.seed, 10, epoch)
        order = rng.permutation(n)
        elements = rng.integers(0, 8, size=n) if cfg.augment else [None] * n
        start = time.perf_counter()
        total, seen = 0.0, 0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            sel = order[lo:lo + cfg.batch_size]
            x, y = batch_arrays(model, data, [refs[i] for i in sel], [elements[i] for i in sel])
            t, mask = one_hot(data.taxonomy.indices(y), model.num_classes)
            if not mask.any():
                log.warning("epoch %d batch %d: no labeled pixels, skipped", epoch, b)
                continue
            opt.zero_grad()
            loss = composite_loss(model(Tensor(x)), t, loss_cfg, mask, p)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericAbort(epoch, b, lr, value)
            loss.backward()
            opt.step(lr)
            total += value * len(sel)
            seen += len(sel)
        rec = EpochRecord(epoch, total / seen if seen else float("nan"), lr, frozen,
                          round(time.perf_counter() - start, 3))
        trainlog.append(rec)
        if progress is not None:
            progress(rec)
        if out is not None:
            last = epoch == cfg.epochs - 1
            if last or (cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0):
                save_model(model, out / f"epoch_{epoch:03d}.lckp", epoch)
            trainlog.save(out / "train_log.ndjson")
    if out is not None:
        save_model(model, out / "model.lckp", cfg.epochs - 1)
    model.eval()
    return model, trainlog
