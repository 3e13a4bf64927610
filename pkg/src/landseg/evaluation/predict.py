"""Inference: argmax decoding, whole-area stitching."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..dataset import AreaRaster, BandStats, NO_OVERLAP_HOP, PatchRef, cut_patches, materialize
from ..engine import DimensionError, Tensor
from ..models.layers import Module
from ..models.unet import BaselineUNet
from ..taxonomy import ClcTaxonomy, default_taxonomy
from ..training.loop import model_inputs, model_targets


def decode(logits: np.ndarray, taxonomy: ClcTaxonomy | None = None) -> np.ndarray:
    """Argmax over axis 1 (N×C×H×W) or 0 (C×H×W) mapped to level-3 codes.

    ``np.argmax`` keeps the first maximum, so ties resolve to the lower
    dense index and thus the lower code.
    """
    taxonomy = taxonomy or default_taxonomy()
    logits = np.asarray(logits)
    axis = 1 if logits.ndim == 4 else 0
    if logits.ndim not in (3, 4) or logits.shape[axis] != taxonomy.size:
        raise DimensionError(f"expected {taxonomy.size} class logits, got shape {logits.shape}")
    return np.asarray(taxonomy.codes, dtype=np.uint16)[np.argmax(logits, axis=axis)]


def predict(model: Module, x: np.ndarray, taxonomy: ClcTaxonomy | None = None, batch_size: int = 8) -> np.ndarray:
    """Code grid per standardized patch; accepts (10, H, W) or (N, 10, H, W)."""
    x = np.asarray(x, dtype=np.float32)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4:
        raise DimensionError(f"predict: expected (N, C, H, W) input, got {x.shape}")
    was_training = model.training
    model.eval()
    try:
        out = [decode(model(Tensor(model_inputs(model, x[i:i + batch_size]))).data, taxonomy)
               for i in range(0, len(x), batch_size)]
    finally:
        model.train(was_training)
    grids = np.concatenate(out)
    return grids[0] if single else grids


@dataclass
class AreaPrediction:
    """Per-tile grids on the model's output grid plus full-resolution maps."""

    area_id: str
    tiles: list[PatchRef]
    truth: np.ndarray  # (T, h, w) codes on the output grid
    pred: np.ndarray
    truth_map: np.ndarray  # area-sized label raster
    pred_map: np.ndarray  # area-sized, 0 where no tile covers


def _paint(canvas: np.ndarray, ref: PatchRef, grid: np.ndarray, scale: int = 1) -> None:
    covered = grid.shape[0] * scale
    off = (ref.size - covered) // 2
    block = np.repeat(np.repeat(grid, scale, axis=0), scale, axis=1) if scale > 1 else grid
    canvas[ref.row + off:ref.row + off + covered, ref.col + off:ref.col + off + covered] = block


def predict_area(model: Module, area: AreaRaster, stats: BandStats, taxonomy: ClcTaxonomy | None = None,
                 hop: int = NO_OVERLAP_HOP) -> AreaPrediction:
    """Tile an area with non-overlapping patches and predict each one."""
    taxonomy = taxonomy or default_taxonomy()
    areas = {area.area_id: area}
    tiles = cut_patches(area, hop=hop)
    xs, ys = zip(*(materialize(r, areas, stats) for r in tiles))
    pred = predict(model, np.stack(xs), taxonomy)
    truth = model_targets(model, np.stack(ys))
    pred_map = np.zeros_like(area.labels)
    scale = model.config.output_pool if isinstance(model, BaselineUNet) else 1
    for ref, grid in zip(tiles, pred):
        _paint(pred_map, ref, grid, scale)
    return AreaPrediction(area.area_id, tiles, truth, pred, area.labels.copy(), pred_map)


def predict_areas(model: Module, areas: Mapping[str, AreaRaster], ids, stats: BandStats,
                  taxonomy: ClcTaxonomy | None = None) -> list[AreaPrediction]:
    return [predict_area(model, areas[a], stats, taxonomy) for a in ids]
