"""Prediction, hierarchy-aware metrics, maps and reports."""
from .metrics import (LEVELS, ClassRow, ConfusionMatrix, LevelMetrics, confusion, evaluate_levels, metrics,
                      project_grids)
from .predict import AreaPrediction, decode, predict, predict_area, predict_areas
from .report import (PpmError, decode_ppm, encode_ppm, load_report_json, map_rgb, read_ppm, render_map, report,
                     report_json, report_tsv, write_ppm)

__all__ = [
    "AreaPrediction", "ClassRow", "ConfusionMatrix", "LEVELS", "LevelMetrics", "PpmError", "confusion", "decode",
    "decode_ppm", "encode_ppm", "evaluate_levels", "load_report_json", "map_rgb", "metrics", "predict",
    "predict_area", "predict_areas", "project_grids", "read_ppm", "render_map", "report", "report_json",
    "report_tsv", "write_ppm",
]
