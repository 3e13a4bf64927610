"""Raster ingestion, patching, augmentation and fold splits."""
from .patches import (CV_HOP, D4_ELEMENTS, NO_OVERLAP_HOP, PATCH, PatchRef, apply_d4, compose_d4, cut_patches,
                      discard_sea_only, is_sea_only, materialize)
from .raster import (BAND_NAMES, AreaRaster, DataError, assemble_area, load_areas, read_area, resample_20m,
                     write_area)
from .splits import FoldPlan, PreconditionError, random_split, split_folds
from .stats import BandStats, compute_stats
from .synthetic import generate_synthetic_area, signature_table

__all__ = [
    "AreaRaster", "BAND_NAMES", "BandStats", "CV_HOP", "D4_ELEMENTS", "DataError", "FoldPlan", "NO_OVERLAP_HOP",
    "PATCH", "PatchRef", "PreconditionError", "apply_d4", "assemble_area", "compose_d4", "compute_stats",
    "cut_patches", "discard_sea_only", "generate_synthetic_area", "is_sea_only", "load_areas", "materialize",
    "random_split", "read_area", "resample_20m", "signature_table", "split_folds", "write_area",
]
