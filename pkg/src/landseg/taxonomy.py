"""CORINE Land Cover class hierarchy.

Level-3 classes come from a JSON table (``code3``, ``name``, ``color``); the
default table holds the 32 classes of the Ionian study area. Level-1 and
level-2 names follow the standard CLC nomenclature.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

UNLABELED = 0
SEA = 523

LEVEL1_NAMES = {
    1: "Artificial Surfaces",
    2: "Agricultural areas",
    3: "Forest and seminatural areas",
    4: "Wetlands",
    5: "Water bodies",
}

LEVEL2_NAMES = {
    11: "Urban fabric",
    12: "Industrial, commercial and transport units",
    13: "Mine, dump and construction sites",
    14: "Artificial, non-agricultural vegetated areas",
    21: "Arable land",
    22: "Permanent crops",
    23: "Pastures",
    24: "Heterogeneous agricultural areas",
    31: "Forest",
    32: "Shrub and/or herbaceous vegetation associations",
    33: "Open spaces with little or no vegetation",
    41: "Inland wetlands",
    42: "Coastal wetlands",
    51: "Inland waters",
    52: "Marine waters",
}


class TaxonomyError(KeyError):
    """Unknown class code."""

    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


@dataclass(frozen=True)
class ClcClass:
    code3: int
    name: str
    color: tuple[int, int, int]

    @property
    def level1(self) -> int:
        return self.code3 // 100

    @property
    def level2(self) -> int:
        return self.code3 // 10


def project_code(code: int, level: int) -> int:
    """Project a code of any level (its digit count) to a coarser or equal ``level``."""
    if level not in (1, 2, 3):
        raise ValueError(f"level must be 1, 2 or 3, got {level}")
    own = len(str(int(code)))
    if level > own:
        raise ValueError(f"cannot refine level-{own} code {code} to level {level}")
    return int(code) // 10 ** (own - level)


def format_code(code: int) -> str:
    """``523`` -> ``"5.2.3"``, ``52`` -> ``"5.2"``, ``5`` -> ``"5."``."""
    digits = str(code)
    return digits + "." if len(digits) == 1 else ".".join(digits)


class ClcTaxonomy:
    """Ordered set of level-3 classes; dense index order is ascending code."""

    def __init__(self, classes):
        classes = sorted(classes, key=lambda c: c.code3)
        codes = [c.code3 for c in classes]
        if len(set(codes)) != len(codes):
            raise ValueError("duplicate class codes in taxonomy")
        for c in classes:
            if not 100 <= c.code3 <= 999:
                raise ValueError(f"class code {c.code3} is not a three-digit code")
        self.classes: tuple[ClcClass, ...] = tuple(classes)
        self.codes = np.array(codes, dtype=np.int64)
        self._index = {code: i for i, code in enumerate(codes)}
        self._by_code = {c.code3: c for c in classes}
        # dense lookup table code -> index, -1 for unknown
        self._lut = np.full(1000, -1, dtype=np.int64)
        self._lut[self.codes] = np.arange(len(codes))

    @classmethod
    def from_json(cls, path: str | Path) -> "ClcTaxonomy":
        return cls.from_records(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def from_records(cls, records) -> "ClcTaxonomy":
        return cls(ClcClass(int(r["code3"]), str(r["name"]), tuple(int(v) for v in r["color"])) for r in records)

    def to_records(self) -> list[dict]:
        return [{"code3": c.code3, "name": c.name, "color": list(c.color)} for c in self.classes]

    @property
    def size(self) -> int:
        return len(self.classes)

    def __len__(self) -> int:
        return len(self.classes)

    def __contains__(self, code3: int) -> bool:
        return self.contains(code3)

    def contains(self, code3: int) -> bool:
        return int(code3) in self._index

    def index_of(self, code3: int) -> int:
        try:
            return self._index[int(code3)]
        except KeyError:
            raise TaxonomyError(f"class code {code3} is not in the taxonomy") from None

    def code_at(self, index: int) -> int:
        return int(self.codes[index])

    def project(self, code3: int, level: int) -> int:
        if not self.contains(code3):
            raise TaxonomyError(f"class code {code3} is not in the taxonomy")
        return project_code(int(code3), level)

    def codes_at(self, level: int) -> list[int]:
        return sorted({project_code(int(c), level) for c in self.codes})

    def name_of(self, code: int, level: int | None = None) -> str:
        """Name of a code; the level is inferred from the digit count unless given."""
        code = int(code)
        level = level or len(str(code))
        if level == 3 and code in self._by_code:
            return self._by_code[code].name
        if level == 2 and code in LEVEL2_NAMES and code in self.codes_at(2):
            return LEVEL2_NAMES[code]
        if level == 1 and code in LEVEL1_NAMES and code in self.codes_at(1):
            return LEVEL1_NAMES[code]
        raise TaxonomyError(f"class code {code} is unknown at level {level}")

    def color_of(self, code3: int) -> tuple[int, int, int]:
        try:
            return self._by_code[int(code3)].color
        except KeyError:
            raise TaxonomyError(f"class code {code3} is not in the taxonomy") from None

    def label(self, code: int, level: int) -> str:
        """Row label as printed in reports, e.g. ``"2.2.3 Olive groves"``."""
        return f"{format_code(code)} {self.name_of(code, level)}"

    # vectorized helpers over code grids -------------------------------------

    def indices(self, grid: np.ndarray) -> np.ndarray:
        """Map a code grid to dense indices; label 0 maps to -1."""
        grid = np.asarray(grid)
        bad = (grid != UNLABELED) & ((grid < 0) | (grid > 999))
        idx = np.where(grid == UNLABELED, -1, self._lut[np.clip(grid, 0, 999)])
        if bad.any() or ((grid != UNLABELED) & (idx < 0)).any():
            unknown = sorted(set(np.unique(grid[(grid != UNLABELED) & ((idx < 0) | bad)]).tolist()))
            raise TaxonomyError(f"class codes {unknown} are not in the taxonomy")
        return idx

    def project_grid(self, grid: np.ndarray, level: int) -> np.ndarray:
        """Project a level-3 code grid to ``level``; 0 stays 0."""
        grid = np.asarray(grid)
        self.indices(grid)  # validates
        if level == 3:
            return grid.astype(np.int64)
        div = 10 if level == 2 else 100
        return np.where(grid == UNLABELED, 0, grid // div).astype(np.int64)

    def palette(self) -> np.ndarray:
        """(1000, 3) uint8 lookup from code3 to color; code 0 is black."""
        lut = np.zeros((1000, 3), dtype=np.uint8)
        for c in self.classes:
            lut[c.code3] = c.color
        return lut


def default_taxonomy() -> ClcTaxonomy:
    text = resources.files("landseg.data").joinpath("clc_ionio.json").read_text(encoding="utf-8")
    return ClcTaxonomy.from_records(json.loads(text))


def load_taxonomy(path: str | Path | None) -> ClcTaxonomy:
    return default_taxonomy() if path is None else ClcTaxonomy.from_json(path)
