"""Lazy patch references, sea filtering, D4 augmentation and materialization."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from ..engine import make_rng
from ..taxonomy import SEA, UNLABELED
from .raster import AreaRaster
from .stats import BandStats

PATCH = 128
CV_HOP = 64
NO_OVERLAP_HOP = 128


@dataclass(frozen=True, order=True)
class PatchRef:
    area_id: str
    row: int
    col: int
    size: int = PATCH

    def window(self) -> tuple[slice, slice]:
        return slice(self.row, self.row + self.size), slice(self.col, self.col + self.size)


def grid_offsets(extent: int, patch: int, hop: int) -> range:
    if patch > extent:
        return range(0)
    return range(0, extent - patch + 1, hop)


def cut_patches(area: AreaRaster, patch: int = PATCH, hop: int = CV_HOP) -> list[PatchRef]:
    """Offsets 0, hop, 2*hop, ... on both axes; windows past the edge are dropped."""
    if hop < 1:
        raise ValueError(f"hop must be >= 1, got {hop}")
    return [PatchRef(area.area_id, r, c, patch)
            for r in grid_offsets(area.height, patch, hop)
            for c in grid_offsets(area.width, patch, hop)]


def is_sea_only(ref: PatchRef, area: AreaRaster) -> bool:
    """True when every label in the window is sea (523) or unlabeled (0)."""
    y = area.labels[ref.window()]
    return not np.any((y != SEA) & (y != UNLABELED))


def discard_sea_only(patches: Iterable[PatchRef], areas: Mapping[str, AreaRaster] | AreaRaster) -> list[PatchRef]:
    if isinstance(areas, AreaRaster):
        areas = {areas.area_id: areas}
    return [p for p in patches if not is_sea_only(p, areas[p.area_id])]


# ---------------------------------------------------------------- D4 group

# element e = 2*k + f: optional horizontal flip (f) first, then k clockwise quarter turns
D4_ELEMENTS = tuple(range(8))


def apply_d4(arr: np.ndarray, element: int | None) -> np.ndarray:
    """Apply a dihedral transform to the last two axes."""
    if element is None or element == 0:
        return arr
    if element not in D4_ELEMENTS:
        raise ValueError(f"D4 element must be in 0..7, got {element}")
    k, flip = divmod(element, 2)
    if flip:
        arr = arr[..., ::-1]
    if k:
        arr = np.rot90(arr, -k, axes=(-2, -1))
    return arr


def compose_d4(a: int, b: int) -> int:
    """Element equal to applying ``b`` and then ``a``."""
    probe = np.arange(9).reshape(3, 3)
    target = apply_d4(apply_d4(probe, b), a)
    for e in D4_ELEMENTS:
        if np.array_equal(apply_d4(probe, e), target):
            return e
    raise AssertionError("D4 is closed under composition")


# ---------------------------------------------------------------- materialization

def materialize(ref: PatchRef, areas: Mapping[str, AreaRaster], stats: BandStats,
                augment: int | str | None = None, seed: int | tuple[int, ...] = 0) -> tuple[np.ndarray, np.ndarray]:
    """Cut, standardize and (optionally) transform one patch.

    ``augment`` is a D4 element, ``None`` for identity, or ``"random"`` to draw
    one uniformly from a generator keyed by ``seed``. Returns ``X`` as
    (10, size, size) float32 and ``Y`` as (size, size) uint16 codes.
    """
    try:
        area = areas[ref.area_id]
    except KeyError:
        raise LookupError(f"patch refers to unknown area {ref.area_id!r}") from None
    if ref.row < 0 or ref.col < 0 or ref.row + ref.size > area.height or ref.col + ref.size > area.width:
        raise ValueError(f"patch {ref} does not fit area {area.area_id} ({area.height}x{area.width})")
    rows, cols = ref.window()
    x = stats.standardize(area.bands[:, rows, cols])
    y = area.labels[rows, cols]
    if augment == "random":
        key = seed if isinstance(seed, tuple) else (seed,)
        augment = int(make_rng(*key).integers(0, 8))
    x = np.ascontiguousarray(apply_d4(x, augment))
    y = np.ascontiguousarray(apply_d4(y, augment))
    return x, y
