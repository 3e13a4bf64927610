"""``landseg`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataset import BandStats, compute_stats, generate_synthetic_area, load_areas, read_area, write_area
from .dataset.raster import DataError
from .dataset.splits import PreconditionError
from .engine import DimensionError, ParameterError
from .evaluation import evaluate_levels, predict_area, render_map, report
from .models.checkpoint import CheckpointFormatError
from .models.resunet import ConfigError
from .models.transfer import load_model
from .taxonomy import TaxonomyError, load_taxonomy
from .training import LossConfigError, NumericAbort, TrainConfigError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("landseg")


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 256x256, got {text!r}") from None
    return h, w


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    h, w = args.size
    if h < 128 or w < 128:
        raise DataError(f"areas must be at least 128x128 pixels, got {h}x{w}")
    out = Path(args.out)
    classes = _ints(args.classes) if args.classes else None
    ids = []
    for i in range(args.areas):
        aid = f"{args.prefix}{i:02d}"
        area = generate_synthetic_area(aid, width=w, height=h, seed=args.seed * 1000 + i,
                                       noise_sigma=args.sigma, classes=classes)
        write_area(area, out / aid)
        ids.append(aid)
    if args.folds:
        if args.folds > args.areas:
            raise ConfigError("more fold groups than areas")
        groups = {f"group_{g + 1}": ids[g::args.folds] for g in range(args.folds)}
        (out / "fold_plan.json").write_text(json.dumps(groups, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(ids)} areas to {out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    areas = load_areas(args.data, args.areas or None)
    stats = compute_stats(areas, list(areas))
    if args.out:
        stats.save(args.out)
    print(json.dumps(stats.to_json(), indent=2))
    return EXIT_OK


def _run_config(args):
    from .pipeline import RunConfig

    cfg = RunConfig.load(args.config)
    if getattr(args, "out", None):
        cfg.out_dir = Path(args.out)
    if getattr(args, "epochs", None):
        cfg.train = replace(cfg.train, epochs=args.epochs)
    if getattr(args, "no_figures", False):
        cfg.figures = False
    return cfg


def _progress(fold: str):
    def emit(rec):
        print(f"{fold}epoch {rec.epoch:3d}  loss {rec.loss:.5f}  lr {rec.lr:.3g}  "
              f"{'frozen' if rec.frozen else 'trainable'}  {rec.wall_time:.1f}s", flush=True)
    return emit


def cmd_train(args) -> int:
    from .dataset import cut_patches, discard_sea_only, split_folds
    from .models.checkpoint import Checkpoint
    from .models.transfer import build_model, load_encoder
    from .training import TrainingSet, fit

    cfg = _run_config(args)
    cfg.validate()
    taxonomy = load_taxonomy(cfg.taxonomy)
    areas = load_areas(cfg.data_dir, cfg.fold_plan.area_ids)
    ids = split_folds(cfg.fold_plan, args.fold)[0] if args.fold else cfg.fold_plan.area_ids
    stats = BandStats.load(cfg.stats) if cfg.stats else compute_stats(areas, ids)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    stats.save(out / "stats.json")
    refs = discard_sea_only([r for a in ids for r in cut_patches(areas[a], hop=cfg.hop)], areas)
    model = build_model(cfg.model, seed=cfg.seed)
    if cfg.encoder_checkpoint:
        for line in load_encoder(model, Checkpoint.load(cfg.encoder_checkpoint)).lines():
            print(line)
    fit(model, TrainingSet(refs, areas, stats, taxonomy), cfg.train, cfg.loss, out_dir=out,
        progress=_progress(""))
    print(f"checkpoint {out / 'model.lckp'}; log {out / 'train_log.ndjson'}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model, _ = load_model(args.model)
    stats = BandStats.load(args.stats)
    taxonomy = load_taxonomy(args.taxonomy)
    areas = load_areas(args.data, args.areas or None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for aid, area in areas.items():
        p = predict_area(model, area, stats, taxonomy)
        np.save(out / f"{aid}_pred.npy", p.pred_map)
        (out / f"{aid}_pred.ppm").write_bytes(render_map(p.pred_map, taxonomy))
        covered = p.pred_map != 0
        labeled = covered & (area.labels != 0)
        agree = float((p.pred_map[labeled] == area.labels[labeled]).mean()) if labeled.any() else float("nan")
        print(f"{aid}: {int(covered.sum())} pixels predicted, agreement with labels {agree:.4f}")
    return EXIT_OK


def _load_grid(path: str) -> np.ndarray:
    p = Path(path)
    if p.is_dir():
        return read_area(p).labels
    try:
        return np.load(p)
    except (OSError, ValueError) as exc:
        raise DataError(f"{p}: cannot read a code grid ({exc})") from None


def cmd_evaluate(args) -> int:
    taxonomy = load_taxonomy(args.taxonomy)
    truth, pred = _load_grid(args.truth), _load_grid(args.pred)
    if truth.shape != pred.shape:
        raise DataError(f"truth {truth.shape} and prediction {pred.shape} differ in shape")
    keep = pred != 0  # pixels no tile covered carry no prediction
    if not keep.all():
        log.warning("evaluate: %d pixels without prediction excluded", int((~keep).sum()))
    levels = evaluate_levels(truth[keep], pred[keep], taxonomy)
    if all(v is None for v in levels.values()):
        raise DataError("no labeled pixels to evaluate")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for fmt, name in (("json", "metrics.json"), ("text", "report.txt"), ("tsv", "report.tsv")):
            (out / name).write_text(report(levels, fmt, taxonomy), encoding="utf-8")
    print(report(levels, args.format, taxonomy))
    return EXIT_OK


def cmd_render(args) -> int:
    grid = _load_grid(args.grid)
    Path(args.out).write_bytes(render_map(grid, load_taxonomy(args.taxonomy)))
    print(f"wrote {args.out} ({grid.shape[1]}x{grid.shape[0]})")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    from .gradsuite import format_table, run_suite

    results, seconds = run_suite(range(args.seeds))
    print(format_table(results))
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} primitives pass over {args.seeds} seeds "
          f"in {seconds:.1f}s")
    return EXIT_OK if ok else 1


def cmd_cross_validate(args) -> int:
    from .pipeline import cross_validate

    cfg = _run_config(args)
    folds = _ints(args.folds) if args.folds else None
    results = cross_validate(cfg, folds, progress=_progress("") if args.verbose else None)
    for r in results:
        acc = "  ".join(f"L{lv} {m.accuracy:.5f}" if m else f"L{lv} n/a" for lv, m in sorted(r.levels.items()))
        print(f"fold {r.fold} ({r.name}): validation {','.join(r.validation_areas)}  {acc}")
    print(f"results in {cfg.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="landseg", description="Land-cover segmentation on CLC hierarchies.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic areas")
    p.add_argument("--out", required=True)
    p.add_argument("--areas", type=int, default=6)
    p.add_argument("--size", type=_size, default=(256, 256), help="HxW in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.1, help="band noise")
    p.add_argument("--classes", help="comma-separated level-3 codes to draw from")
    p.add_argument("--prefix", default="area_")
    p.add_argument("--folds", type=int, default=0, help="also write a fold plan with this many groups")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="band means and stds")
    p.add_argument("--data", required=True)
    p.add_argument("--areas", nargs="*")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    for name, func, helptext in (("train", cmd_train, "train one model"),
                                 ("cross-validate", cmd_cross_validate, "train and evaluate every fold")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--out", help="override out_dir")
        p.add_argument("--epochs", type=int, help="override train.epochs")
        if name == "train":
            p.add_argument("--fold", type=int, help="train on every group but this one")
        else:
            p.add_argument("--folds", help="comma-separated subset of folds")
            p.add_argument("--no-figures", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("predict", help="predict code maps for areas")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--areas", nargs="*")
    p.add_argument("--taxonomy")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metrics at all three levels")
    p.add_argument("--truth", required=True, help=".npy code grid or area directory")
    p.add_argument("--pred", required=True, help=".npy code grid or area directory")
    p.add_argument("--format", choices=("text", "json", "tsv"), default="text")
    p.add_argument("--taxonomy")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="legend-colored P6 map")
    p.add_argument("--grid", required=True, help=".npy code grid or area directory")
    p.add_argument("--out", required=True)
    p.add_argument("--taxonomy")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("grad-check", help="finite-difference check of every primitive")
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=cmd_grad_check)
    return ap


CONFIG_ERRORS = (ConfigError, TrainConfigError, LossConfigError, ParameterError)
DATA_ERRORS = (DataError, TaxonomyError, CheckpointFormatError, PreconditionError, DimensionError, OSError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericAbort as exc:
        code, exc_ = EXIT_NUMERIC, exc
    except CONFIG_ERRORS as exc:
        code, exc_ = EXIT_CONFIG, exc
    except DATA_ERRORS as exc:
        code, exc_ = EXIT_DATA, exc
    fold = getattr(exc_, "fold", None)
    prefix = f"fold {fold}: " if fold is not None else ""
    print(f"landseg {args.command}: {prefix}{exc_}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
