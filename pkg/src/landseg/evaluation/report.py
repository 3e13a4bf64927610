"""Legend-colored P6 maps and per-level metric reports."""
from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Mapping

import numpy as np

from ..taxonomy import ClcTaxonomy, default_taxonomy
from .metrics import LEVELS, LevelMetrics


class PpmError(ValueError):
    pass


# ---------------------------------------------------------------- maps

def map_rgb(grid, taxonomy: ClcTaxonomy | None = None) -> np.ndarray:
    """(H, W, 3) uint8 legend colors; unlabeled cells are black."""
    taxonomy = taxonomy or default_taxonomy()
    grid = np.asarray(grid)
    taxonomy.indices(grid)  # unknown codes raise
    return taxonomy.palette()[grid.astype(np.int64)]


def encode_ppm(rgb: np.ndarray) -> bytes:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise PpmError(f"P6 needs an (H, W, 3) uint8 image, got {rgb.shape} {rgb.dtype}")
    h, w = rgb.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(rgb).tobytes()


_HEADER = re.compile(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s")


def decode_ppm(data: bytes) -> np.ndarray:
    m = _HEADER.match(data)
    if not m:
        raise PpmError("not a binary P6 image")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise PpmError(f"only maxval 255 is supported, got {maxval}")
    body = data[m.end():]
    if len(body) != w * h * 3:
        raise PpmError(f"P6 body has {len(body)} bytes, header promises {w * h * 3}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()


def render_map(grid, taxonomy: ClcTaxonomy | None = None) -> bytes:
    """One pixel per cell, row-major, as a binary P6 image."""
    return encode_ppm(map_rgb(grid, taxonomy))


def write_ppm(path, data: bytes | np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(data if isinstance(data, bytes) else encode_ppm(data))
    return path


def read_ppm(path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


# ---------------------------------------------------------------- reports

def _g(v: float, digits: int = 4) -> str:
    return f"{v:.{digits}g}"


def _aggregates(m: LevelMetrics) -> list[str]:
    return [f"accuracy = {_g(m.accuracy, 5)}", f"f1_macro = {_g(m.f1_macro, 5)}",
            f"f1_micro = {_g(m.f1_micro, 5)}", f"f1weighted = {_g(m.f1_weighted, 5)}"]


def _level_text(level: int, m: LevelMetrics | None, taxonomy: ClcTaxonomy) -> list[str]:
    lines = [f"CORINE CLASS LEVEL {level} :", ""]
    if m is None or not m.rows:
        return lines + ["(no labeled pixels at this level; section omitted)", ""]
    labels = [taxonomy.label(r.code, level) for r in m.rows]
    if level == 1:
        # coarse level: classes across, statistics down
        lines += ["\t".join(["class"] + labels),
                  "\t".join(["support"] + [str(r.support) for r in m.rows]),
                  "\t".join(["precision"] + [_g(r.precision) for r in m.rows]),
                  "\t".join(["recall"] + [_g(r.recall) for r in m.rows])]
    else:
        lines.append("class\tsupport\tprecision\trecall")
        lines += [f"{lab}\t{r.support}\t{_g(r.precision)}\t{_g(r.recall)}" for lab, r in zip(labels, m.rows)]
    return lines + [""] + _aggregates(m) + [""]


def report_json(levels: Mapping[int, LevelMetrics | None]) -> str:
    doc = {str(k): (None if v is None else v.to_json()) for k, v in sorted(levels.items())}
    return json.dumps({"levels": doc}, indent=2, sort_keys=True) + "\n"


def report_tsv(levels: Mapping[int, LevelMetrics | None], taxonomy: ClcTaxonomy | None = None) -> str:
    taxonomy = taxonomy or default_taxonomy()
    out = ["level\tclass\tsupport\tprecision\trecall\tf1"]
    for level, m in sorted(levels.items()):
        if m is None:
            continue
        out += [f"{level}\t{taxonomy.label(r.code, level)}\t{r.support}\t{r.precision!r}\t{r.recall!r}\t{r.f1!r}"
                for r in m.rows]
        out += [f"{level}\t{name}\t{m.total}\t\t\t{getattr(m, name)!r}"
                for name in ("accuracy", "f1_macro", "f1_micro", "f1_weighted")]
    return "\n".join(out) + "\n"


def report(levels: Mapping[int, LevelMetrics | None], fmt: str = "text",
           taxonomy: ClcTaxonomy | None = None) -> str:
    """Render per-level metrics as ``text`` (fixed layout), ``json`` or ``tsv``."""
    taxonomy = taxonomy or default_taxonomy()
    if fmt == "json":
        return report_json(levels)
    if fmt == "tsv":
        return report_tsv(levels, taxonomy)
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    lines: list[str] = []
    for level in LEVELS:
        if level in levels:
            lines += _level_text(level, levels[level], taxonomy)
    return "\n".join(lines)


def load_report_json(text: str) -> dict[int, LevelMetrics | None]:
    doc = json.loads(text)["levels"]
    return {int(k): (None if v is None else LevelMetrics.from_json(v)) for k, v in doc.items()}
