"""Procedural stand-in for a Sentinel-2 scene with CLC labels.

The landscape is a Voronoi partition over seeded sites, each site carrying a
land class; a strip of sea (523) runs along one edge. Every class has a fixed
10-band signature shared by all areas, so a model trained on some areas can
recognise the same classes elsewhere.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..engine import make_rng
from ..taxonomy import SEA, ClcTaxonomy, default_taxonomy
from .raster import BAND_NAMES, AreaRaster

SIGNATURE_SEED = 20180101
SIGNATURE_RANGE = 1.5


@lru_cache(maxsize=8)
def _signatures(codes: tuple[int, ...]) -> np.ndarray:
    # greedy max-min selection from a seeded candidate cloud keeps classes well apart
    rng = make_rng(SIGNATURE_SEED, len(codes))
    cand = rng.uniform(-SIGNATURE_RANGE, SIGNATURE_RANGE, size=(4096, len(BAND_NAMES)))
    chosen = [0]
    dist = np.linalg.norm(cand - cand[0], axis=1)
    while len(chosen) < len(codes):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(cand - cand[nxt], axis=1))
    sig = cand[chosen].astype(np.float32)
    sig.setflags(write=False)
    return sig


def signature_table(taxonomy: ClcTaxonomy | None = None) -> np.ndarray:
    """(num_classes, 10) band signature per class, rows in dense-index order."""
    taxonomy = taxonomy or default_taxonomy()
    return _signatures(tuple(int(c) for c in taxonomy.codes))


def generate_synthetic_area(area_id: str, width: int = 256, height: int = 256, seed: int = 0,
                            noise_sigma: float = 0.1, classes=None, n_sites: int | None = None,
                            sea_margin: int = 24, taxonomy: ClcTaxonomy | None = None) -> AreaRaster:
    """Build one synthetic area.

    ``classes`` restricts the land classes the sites draw from (default: every
    non-sea class of the taxonomy). ``n_sites`` defaults to one site per
    64×64 block.
    """
    if width < 128 or height < 128:
        raise ValueError(f"synthetic areas must be at least 128x128, got {height}x{width}")
    taxonomy = taxonomy or default_taxonomy()
    palette = [int(c) for c in (classes if classes is not None else taxonomy.codes) if int(c) != SEA]
    for c in palette:
        taxonomy.index_of(c)
    if not palette:
        raise ValueError("synthetic areas need at least one land class")
    n_sites = n_sites or max(4, (width * height) // (64 * 64))

    rng = make_rng(seed)
    sites = rng.uniform(0, 1, size=(n_sites, 2)) * np.array([height, width])
    site_class = rng.choice(np.array(palette), size=n_sites)
    rr, cc = np.mgrid[0:height, 0:width]
    d2 = (rr[None] - sites[:, 0, None, None]) ** 2 + (cc[None] - sites[:, 1, None, None]) ** 2
    labels = site_class[np.argmin(d2, axis=0)].astype(np.uint16)

    if sea_margin > 0 and SEA in taxonomy:
        side = int(rng.integers(0, 4))
        if side == 0:
            labels[:sea_margin, :] = SEA
        elif side == 1:
            labels[-sea_margin:, :] = SEA
        elif side == 2:
            labels[:, :sea_margin] = SEA
        else:
            labels[:, -sea_margin:] = SEA

    sig = signature_table(taxonomy)
    bands = sig[taxonomy.indices(labels)].transpose(2, 0, 1).copy()
    if noise_sigma > 0:
        bands += (noise_sigma * rng.standard_normal(bands.shape)).astype(np.float32)
    return AreaRaster(area_id, bands, labels)
