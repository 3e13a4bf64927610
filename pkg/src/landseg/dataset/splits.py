"""Geographic fold plans and the random patch split."""
from __future__ import annotations

import json
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..engine import ParameterError, make_rng
from .patches import PatchRef

# the Ionian study area, one group per validation fold
IONIAN_FOLDS = {
    "north_corfu": ["north_corfu"],
    "south_corfu": ["south_corfu"],
    "west_kefalonia": ["west_kefalonia"],
    "east_kefalonia": ["east_kefalonia"],
    "lefkada": ["lefkada"],
    "paxi_zante_kalamos_parga": ["paxi", "north_zante", "kalamos", "parga"],
}


class PreconditionError(ValueError):
    pass


class FoldPlan:
    """Ordered, disjoint groups of area ids."""

    def __init__(self, groups: Mapping[str, Sequence[str]]):
        self.groups: dict[str, list[str]] = {str(k): [str(a) for a in v] for k, v in groups.items()}
        seen: dict[str, str] = {}
        for name, ids in self.groups.items():
            if not ids:
                raise ValueError(f"fold group {name!r} is empty")
            for a in ids:
                if a in seen:
                    raise ValueError(f"area {a!r} is in both {seen[a]!r} and {name!r}")
                seen[a] = name

    @classmethod
    def default(cls) -> "FoldPlan":
        return cls(IONIAN_FOLDS)

    @classmethod
    def load(cls, path: str | Path) -> "FoldPlan":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict[str, list[str]]:
        return {k: list(v) for k, v in self.groups.items()}

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def names(self) -> list[str]:
        return list(self.groups)

    @property
    def area_ids(self) -> list[str]:
        return [a for ids in self.groups.values() for a in ids]

    def check_covers(self, area_ids: Iterable[str]) -> None:
        missing = sorted(set(area_ids) - set(self.area_ids))
        if missing:
            raise ValueError(f"areas not assigned to any fold: {missing}")


def split_folds(plan: FoldPlan, k: int) -> tuple[list[str], list[str]]:
    """Fold ``k`` (1-based): group k validates, all other groups train."""
    if not 1 <= k <= len(plan):
        raise ParameterError(f"fold index {k} outside 1..{len(plan)}")
    names = plan.names
    val = list(plan.groups[names[k - 1]])
    train = [a for i, n in enumerate(names) if i != k - 1 for a in plan.groups[n]]
    return train, val


def check_no_overlap(patches: Sequence[PatchRef]) -> None:
    by_area: dict[str, list[PatchRef]] = defaultdict(list)
    for p in patches:
        by_area[p.area_id].append(p)
    for area_id, refs in by_area.items():
        rc = np.array([(p.row, p.col, p.size) for p in refs])
        dr = np.abs(rc[:, None, 0] - rc[None, :, 0])
        dc = np.abs(rc[:, None, 1] - rc[None, :, 1])
        reach = np.minimum(rc[:, None, 2], rc[None, :, 2])
        clash = (dr < reach) & (dc < reach)
        np.fill_diagonal(clash, False)
        if clash.any():
            i, j = map(int, np.argwhere(clash)[0])
            raise PreconditionError(
                f"random_split needs non-overlapping patches; {refs[i]} overlaps {refs[j]} in {area_id}")


def random_split(patches: Sequence[PatchRef], ratio: float = 0.70, seed: int = 0
                 ) -> tuple[list[PatchRef], list[PatchRef]]:
    """Seeded shuffle, then the first ceil(ratio * n) refs train and the rest validate."""
    if not 0.0 < ratio < 1.0:
        raise ParameterError(f"ratio must lie in (0, 1), got {ratio}")
    check_no_overlap(patches)
    order = make_rng(seed).permutation(len(patches))
    n_train = math.ceil(round(ratio * len(patches), 9))
    shuffled = [patches[i] for i in order]
    return shuffled[:n_train], shuffled[n_train:]
