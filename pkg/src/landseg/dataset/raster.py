"""Area rasters and their on-disk directory format.

An area directory holds::

    header.json   {area_id, width, height, band_names[10], pixel_size_m: 10, nodata_label: 0}
    bands.bin     band-sequential, row-major, little-endian float32, 10*H*W values
    labels.bin    row-major little-endian uint16, H*W values
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..engine import DimensionError
from ..taxonomy import UNLABELED, ClcTaxonomy

BAND_NAMES = ("R", "G", "B", "NIR", "b05", "b06", "b07", "b8A", "b11", "b12")
NATIVE_10M = BAND_NAMES[:4]
RESAMPLED_20M = BAND_NAMES[4:]
PIXEL_SIZE_M = 10


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(eq=False)
class AreaRaster:
    area_id: str
    bands: np.ndarray  # (10, H, W) float32
    labels: np.ndarray  # (H, W) uint16 level-3 codes, 0 = unlabeled
    band_names: tuple[str, ...] = field(default=BAND_NAMES)

    def __post_init__(self):
        self.bands = np.ascontiguousarray(self.bands, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint16)
        if self.bands.ndim != 3 or self.bands.shape[0] != len(BAND_NAMES):
            raise DimensionError(f"area {self.area_id}: bands must be (10, H, W), got {self.bands.shape}")
        if self.labels.shape != self.bands.shape[1:]:
            raise DimensionError(
                f"area {self.area_id}: labels {self.labels.shape} vs bands {self.bands.shape[1:]}")
        self.band_names = tuple(self.band_names)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def nodata_mask(self) -> np.ndarray:
        return self.labels == UNLABELED

    def validate(self, taxonomy: ClcTaxonomy) -> None:
        codes = np.unique(self.labels)
        unknown = [int(c) for c in codes if c != UNLABELED and not taxonomy.contains(int(c))]
        if unknown:
            raise DataError(f"area {self.area_id}: label codes {unknown} not in taxonomy")


def resample_20m(band20: np.ndarray, height: int | None = None, width: int | None = None) -> np.ndarray:
    """Nearest-neighbour upsampling of a 20 m grid onto the 10 m grid (2×2 blocks)."""
    band20 = np.asarray(band20)
    if band20.ndim != 2:
        raise DimensionError("resample_20m expects a 2-D grid")
    h2, w2 = band20.shape
    if height is not None and height != 2 * h2:
        raise DimensionError(f"resample_20m: target height {height} is not 2 x {h2}")
    if width is not None and width != 2 * w2:
        raise DimensionError(f"resample_20m: target width {width} is not 2 x {w2}")
    return band20.repeat(2, axis=0).repeat(2, axis=1)


def assemble_area(area_id: str, native: Sequence[np.ndarray], twenty_m: Sequence[np.ndarray],
                  labels: np.ndarray) -> AreaRaster:
    """Stack R, G, B, NIR (10 m) with b05..b12 (20 m, resampled) into one raster."""
    if len(native) != 4 or len(twenty_m) != 6:
        raise DimensionError("expected 4 native 10 m bands and 6 bands at 20 m")
    h, w = np.asarray(labels).shape
    stack = [np.asarray(b, dtype=np.float32) for b in native]
    stack += [resample_20m(b, h, w).astype(np.float32) for b in twenty_m]
    return AreaRaster(area_id, np.stack(stack), labels)


# ---------------------------------------------------------------- disk format

def write_area(area: AreaRaster, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = {
        "area_id": area.area_id,
        "width": area.width,
        "height": area.height,
        "band_names": list(area.band_names),
        "pixel_size_m": PIXEL_SIZE_M,
        "nodata_label": UNLABELED,
    }
    (directory / "header.json").write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    (directory / "bands.bin").write_bytes(area.bands.astype("<f4").tobytes(order="C"))
    (directory / "labels.bin").write_bytes(area.labels.astype("<u2").tobytes(order="C"))
    return directory


def read_area(directory: str | Path) -> AreaRaster:
    directory = Path(directory)
    try:
        header = json.loads((directory / "header.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"{directory}: missing header.json") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{directory}/header.json: {exc}") from None
    for key in ("area_id", "width", "height", "band_names"):
        if key not in header:
            raise DataError(f"{directory}/header.json: missing field {key!r}")
    h, w = int(header["height"]), int(header["width"])
    nb = len(header["band_names"])
    if nb != len(BAND_NAMES):
        raise DataError(f"{directory}: expected 10 bands, header lists {nb}")
    if header.get("nodata_label", UNLABELED) != UNLABELED:
        raise DataError(f"{directory}: nodata_label must be 0")
    bands_raw = _read_exact(directory / "bands.bin", nb * h * w * 4)
    labels_raw = _read_exact(directory / "labels.bin", h * w * 2)
    bands = np.frombuffer(bands_raw, dtype="<f4").reshape(nb, h, w).astype(np.float32)
    labels = np.frombuffer(labels_raw, dtype="<u2").reshape(h, w).astype(np.uint16)
    return AreaRaster(str(header["area_id"]), bands, labels, tuple(header["band_names"]))


def _read_exact(path: Path, nbytes: int) -> bytes:
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise DataError(f"{path}: missing") from None
    if len(raw) != nbytes:
        raise DataError(f"{path}: expected {nbytes} bytes, found {len(raw)}")
    return raw


def load_areas(root: str | Path, area_ids: Sequence[str] | None = None) -> dict[str, AreaRaster]:
    """Read every area directory under ``root`` (or just ``area_ids``)."""
    root = Path(root)
    if area_ids is None:
        dirs = sorted(p for p in root.iterdir() if (p / "header.json").exists())
    else:
        dirs = [root / a for a in area_ids]
    areas = {}
    for d in dirs:
        area = read_area(d)
        areas[area.area_id] = area
    return areas


def areas_by_id(areas: Mapping[str, AreaRaster] | Sequence[AreaRaster]) -> Mapping[str, AreaRaster]:
    if isinstance(areas, Mapping):
        return areas
    return {a.area_id: a for a in areas}
