"""Per-band standardization statistics."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

STD_FLOOR = 1e-6


@dataclass(frozen=True)
class BandStats:
    means: tuple[float, ...]
    stds: tuple[float, ...]

    def __post_init__(self):
        if len(self.means) != len(self.stds):
            raise ValueError("means and stds differ in length")
        if any(not s > 0 for s in self.stds):
            raise ValueError("every band std must be positive")

    @property
    def mean_array(self) -> np.ndarray:
        return np.asarray(self.means, dtype=np.float32)[:, None, None]

    @property
    def std_array(self) -> np.ndarray:
        return np.asarray(self.stds, dtype=np.float32)[:, None, None]

    def standardize(self, bands: np.ndarray) -> np.ndarray:
        return ((bands - self.mean_array) / self.std_array).astype(np.float32)

    def destandardize(self, x: np.ndarray) -> np.ndarray:
        return (x * self.std_array + self.mean_array).astype(np.float32)

    @classmethod
    def identity(cls, bands: int = 10) -> "BandStats":
        return cls((0.0,) * bands, (1.0,) * bands)

    def to_json(self) -> dict:
        return {"means": list(self.means), "stds": list(self.stds)}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "BandStats":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(tuple(float(v) for v in doc["means"]), tuple(float(v) for v in doc["stds"]))


def compute_stats(areas: Mapping, area_ids: Sequence[str]) -> BandStats:
    """Population mean/std per band over labeled pixels, two passes in float64."""
    from .raster import DataError

    selected = [areas[a] for a in area_ids]
    count = sum(int((~a.nodata_mask).sum()) for a in selected)
    if count == 0:
        raise DataError("compute_stats: no labeled pixels in the selected areas")
    nb = selected[0].bands.shape[0]
    total = np.zeros(nb)
    for a in selected:
        total += a.bands[:, ~a.nodata_mask].astype(np.float64).sum(axis=1)
    mean = total / count
    sq = np.zeros(nb)
    for a in selected:
        d = a.bands[:, ~a.nodata_mask].astype(np.float64) - mean[:, None]
        sq += (d * d).sum(axis=1)
    std = np.maximum(np.sqrt(sq / count), STD_FLOOR)
    return BandStats(tuple(float(v) for v in mean), tuple(float(v) for v in std))
