"""Checkpoint <-> model plumbing, encoder transfer and freezing."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, config_hash
from .layers import Module
from .resunet import ENCODER_PREFIX, ConfigError, ResUNet, ResUNetConfig
from .unet import BaselineUNet, BaselineUNetConfig

log = logging.getLogger(__name__)


def model_spec(model: Module) -> dict:
    kind = "resunet" if isinstance(model, ResUNet) else "baseline"
    return {"kind": kind, **model.config.to_json()}


def build_model(spec: dict, seed: int = 0) -> Module:
    """Build a model from a ``{"kind": "resunet" | "baseline", ...config}`` mapping."""
    kind = spec.get("kind", "resunet")
    if kind == "resunet":
        return ResUNet(ResUNetConfig.from_json(spec), seed)
    if kind == "baseline":
        return BaselineUNet(BaselineUNetConfig.from_json(spec), seed)
    raise ConfigError(f"unknown model kind {kind!r}")


def to_checkpoint(model: Module, epoch: int = 0, prefix: str = "") -> Checkpoint:
    spec = model_spec(model)
    entries = {k: v.copy() for k, v in model.state_dict().items() if k.startswith(prefix)}
    return Checkpoint(entries, {"epoch": int(epoch), "config_hash": config_hash(spec), "model": spec})


def save_model(model: Module, path, epoch: int = 0) -> Path:
    return to_checkpoint(model, epoch).save(path)


def save_encoder(model: Module, path, epoch: int = 0) -> Path:
    return to_checkpoint(model, epoch, prefix=ENCODER_PREFIX).save(path)


def load_state(model: Module, entries) -> None:
    """Copy every entry into the model; names and shapes must match exactly."""
    state = model.state_dict()
    missing = [k for k in state if k not in entries]
    extra = [k for k in entries if k not in state]
    if missing or extra:
        raise ConfigError(f"checkpoint does not fit model: missing {missing[:3]}, unexpected {extra[:3]}")
    for name, target in state.items():
        src = entries[name]
        if src.shape != target.shape:
            raise ConfigError(f"{name}: checkpoint shape {src.shape} != model shape {target.shape}")
        target[...] = src


def load_model(path) -> tuple[Module, dict]:
    ckpt = Checkpoint.load(path)
    spec = ckpt.metadata.get("model")
    if spec is None:
        raise ConfigError(f"{path}: checkpoint carries no model description")
    model = build_model(spec)
    load_state(model, ckpt.entries)
    return model, ckpt.metadata


@dataclass
class LoadReport:
    matched: list[str] = field(default_factory=list)
    skipped: list[tuple[str, tuple, tuple]] = field(default_factory=list)  # name, ckpt shape, model shape
    missing: list[str] = field(default_factory=list)  # encoder entries absent from the checkpoint
    ignored: list[str] = field(default_factory=list)  # checkpoint entries with no encoder counterpart
    warnings: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.skipped or self.missing or self.ignored or self.warnings)

    @property
    def match_fraction(self) -> float:
        total = len(self.matched) + len(self.skipped) + len(self.missing)
        return len(self.matched) / total if total else 0.0

    def lines(self) -> list[str]:
        out = [f"matched {len(self.matched)} encoder entries ({100 * self.match_fraction:.1f}%)"]
        out += [f"skipped {n}: checkpoint {a} vs model {b}" for n, a, b in self.skipped]
        out += [f"missing {n}" for n in self.missing]
        out += [f"ignored {n}" for n in self.ignored]
        out += [f"warning: {w}" for w in self.warnings]
        return out


def load_encoder(model: Module, checkpoint: Checkpoint | str | Path) -> LoadReport:
    """Copy encoder entries matching by name and shape; everything else stays as built."""
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = Checkpoint.load(checkpoint)
    state = model.state_dict()
    report = LoadReport()
    for name, target in state.items():
        if not name.startswith(ENCODER_PREFIX):
            continue
        src = checkpoint.entries.get(name)
        if src is None:
            report.missing.append(name)
        elif src.shape != target.shape:
            report.skipped.append((name, tuple(src.shape), tuple(target.shape)))
        else:
            target[...] = src
            report.matched.append(name)
    report.ignored = [n for n in checkpoint.entries
                      if not n.startswith(ENCODER_PREFIX) or n not in state]
    if not report.matched:
        report.warnings.append("no encoder entries were loaded")
        log.warning("load_encoder: checkpoint matched no encoder entries")
    return report


@dataclass
class FreezeState:
    trainable: dict[str, bool]

    def frozen(self) -> list[str]:
        return [n for n, t in self.trainable.items() if not t]


def set_frozen(model: Module, encoder_frozen: bool) -> FreezeState:
    """Mark encoder parameters frozen or trainable. Frozen encoders also run their batchnorm in eval mode."""
    for name, p in model.named_parameters():
        if name.startswith(ENCODER_PREFIX):
            p.requires_grad = not encoder_frozen
            if encoder_frozen:
                p.grad = None
    model.encoder_frozen = encoder_frozen
    model.train(model.training)
    return freeze_state(model)


def freeze_state(model: Module) -> FreezeState:
    return FreezeState({n: p.requires_grad for n, p in model.named_parameters()})


def encoder_checksum(model: Module) -> int:
    return model.checksum(ENCODER_PREFIX)


def parameter_arrays(model: Module, prefix: str = "") -> dict[str, np.ndarray]:
    return {n: p.data.copy() for n, p in model.named_parameters() if n.startswith(prefix)}
