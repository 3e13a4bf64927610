"""Run configuration and the per-fold train/evaluate/report pipeline."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (CV_HOP, BandStats, FoldPlan, compute_stats, cut_patches, discard_sea_only, load_areas,
                      split_folds)
from .evaluation import (LEVELS, confusion, evaluate_levels, predict_areas, project_grids, render_map, report)
from .models.checkpoint import Checkpoint
from .models.resunet import ConfigError
from .models.transfer import build_model, load_encoder
from .taxonomy import ClcTaxonomy, load_taxonomy
from .training import LossConfig, TrainConfig, TrainingSet, fit

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    data_dir: Path
    fold_plan: FoldPlan
    model: dict
    train: TrainConfig
    loss: LossConfig
    seed: int = 0
    out_dir: Path = Path("runs")
    hop: int = CV_HOP
    stats: Path | None = None  # base-model stats file; wins over training-area stats
    encoder_checkpoint: Path | None = None
    taxonomy: Path | None = None
    figures: bool = True
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, doc: dict, base: Path | None = None) -> "RunConfig":
        base = base or Path(".")

        def path(v):
            if v is None:
                return None
            p = Path(v)
            return p if p.is_absolute() else base / p

        try:
            plan_doc = doc["fold_plan"]
            plan = FoldPlan.load(path(plan_doc)) if isinstance(plan_doc, str) else FoldPlan(plan_doc)
            seed = int(doc.get("seed", 0))
            train = dict(doc.get("train", {}))
            train.setdefault("seed", seed)
            return cls(
                data_dir=path(doc["data_dir"]),
                fold_plan=plan,
                model=dict(doc.get("model", {"kind": "resunet"})),
                train=TrainConfig.from_json(train),
                loss=LossConfig.from_json(doc.get("loss", {})),
                seed=seed,
                out_dir=path(doc.get("out_dir", "runs")),
                hop=int(doc.get("hop", CV_HOP)),
                stats=path(doc.get("stats")),
                encoder_checkpoint=path(doc.get("encoder_checkpoint")),
                taxonomy=path(doc.get("taxonomy")),
                figures=bool(doc.get("figures", True)),
                raw=dict(doc),
            )
        except KeyError as exc:
            raise ConfigError(f"run config is missing {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"run config: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_json(doc, path.parent)

    def validate(self) -> None:
        """Every referenced file must exist before anything runs."""
        if not self.data_dir.is_dir():
            raise ConfigError(f"data_dir {self.data_dir} is not a directory")
        for aid in self.fold_plan.area_ids:
            if not (self.data_dir / aid / "header.json").is_file():
                raise ConfigError(f"area {aid!r} has no directory under {self.data_dir}")
        for name in ("stats", "encoder_checkpoint", "taxonomy"):
            p = getattr(self, name)
            if p is not None and not p.is_file():
                raise ConfigError(f"{name} file {p} does not exist")
        if self.hop < 1:
            raise ConfigError("hop must be >= 1")
        build_model(self.model)  # config errors surface here, not mid-run


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


@dataclass
class FoldResult:
    fold: int
    name: str
    train_areas: list[str]
    validation_areas: list[str]
    levels: dict
    out_dir: Path


def run_fold(cfg: RunConfig, k: int, areas=None, taxonomy: ClcTaxonomy | None = None,
             progress=None) -> FoldResult:
    taxonomy = taxonomy or load_taxonomy(cfg.taxonomy)
    areas = areas if areas is not None else load_areas(cfg.data_dir, cfg.fold_plan.area_ids)
    train_ids, val_ids = split_folds(cfg.fold_plan, k)
    name = cfg.fold_plan.names[k - 1]
    out = cfg.out_dir / f"fold_{k}"
    out.mkdir(parents=True, exist_ok=True)
    stats = BandStats.load(cfg.stats) if cfg.stats else compute_stats(areas, train_ids)
    stats.save(out / "stats.json")

    refs = discard_sea_only([r for a in train_ids for r in cut_patches(areas[a], hop=cfg.hop)], areas)
    leaked = sorted({r.area_id for r in refs} & set(val_ids))
    if leaked:
        raise RuntimeError(f"fold {k}: validation areas {leaked} leaked into training")
    log.info("fold %d (%s): %d training patches from %s; validation %s; no overlap confirmed",
             k, name, len(refs), train_ids, val_ids)

    model = build_model(cfg.model, seed=cfg.seed)
    if cfg.encoder_checkpoint is not None:
        rep = load_encoder(model, Checkpoint.load(cfg.encoder_checkpoint))
        for line in rep.lines():
            log.info("fold %d: %s", k, line)
    fit(model, TrainingSet(refs, areas, stats, taxonomy), cfg.train, cfg.loss, out_dir=out, progress=progress)

    preds = predict_areas(model, areas, val_ids, stats, taxonomy)
    truth = np.concatenate([p.truth.reshape(-1) for p in preds])
    pred = np.concatenate([p.pred.reshape(-1) for p in preds])
    levels = evaluate_levels(truth, pred, taxonomy)
    _write(out / "metrics.json", report(levels, "json", taxonomy))
    _write(out / "report.txt", report(levels, "text", taxonomy))
    _write(out / "report.tsv", report(levels, "tsv", taxonomy))
    maps = out / "maps"
    maps.mkdir(exist_ok=True)
    for p in preds:
        (maps / f"{p.area_id}_truth.ppm").write_bytes(render_map(p.truth_map, taxonomy))
        (maps / f"{p.area_id}_pred.ppm").write_bytes(render_map(p.pred_map, taxonomy))
    if cfg.figures:
        _figures(out, preds, truth, pred, taxonomy)
    return FoldResult(k, name, train_ids, val_ids, levels, out)


def _figures(out: Path, preds, truth, pred, taxonomy) -> None:
    from . import plotting
    from .training import TrainLog

    figs = out / "figures"
    figs.mkdir(exist_ok=True)
    plotting.learning_curve(TrainLog.load(out / "train_log.ndjson").records, figs / "learning_curve.png")
    for level in LEVELS:
        cm = confusion(*project_grids(truth, pred, level, taxonomy), level=level)
        if cm.total:
            plotting.confusion_heatmap(cm, figs / f"confusion_level{level}.png")
    for p in preds:
        plotting.map_pair(p.truth_map, p.pred_map, figs / f"{p.area_id}_maps.png", taxonomy, p.area_id)


def cross_validate(cfg: RunConfig, folds=None, progress=None) -> list[FoldResult]:
    cfg.validate()
    taxonomy = load_taxonomy(cfg.taxonomy)
    areas = load_areas(cfg.data_dir, cfg.fold_plan.area_ids)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for k in folds or range(1, len(cfg.fold_plan) + 1):
        try:
            results.append(run_fold(cfg, k, areas, taxonomy, progress))
        except Exception as exc:
            # callers report the failing fold; the exception type still decides the exit code
            exc.fold = k
            log.error("fold %d failed: %s", k, exc)
            raise
    summary = {str(r.fold): {"name": r.name, "validation": r.validation_areas, "train": r.train_areas,
                             "accuracy": {str(lv): (m.accuracy if m else None) for lv, m in r.levels.items()}}
               for r in results}
    _write(cfg.out_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return results
