"""Matplotlib figures written next to the text/TSV reports."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation.metrics import ConfusionMatrix  # noqa: E402
from .evaluation.report import map_rgb  # noqa: E402
from .taxonomy import ClcTaxonomy, default_taxonomy, format_code  # noqa: E402

# fixed metadata keeps PNG bytes stable across runs
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def learning_curve(records, path, title: str = "Learning curve") -> Path:
    """Mean train loss per epoch; shaded where the encoder was frozen."""
    epochs = [r.epoch for r in records]
    losses = [r.loss for r in records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, losses, marker="o", ms=3)
    frozen = [r.epoch for r in records if r.frozen]
    if frozen:
        ax.axvspan(min(frozen) - 0.5, max(frozen) + 0.5, color="0.9", label="encoder frozen")
        ax.legend()
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def confusion_heatmap(cm: ConfusionMatrix, path, normalize: bool = True) -> Path:
    """Row-normalized confusion with the out-of-set bucket as last column."""
    mat = cm.with_other().astype(np.float64)
    if normalize:
        rows = mat.sum(axis=1, keepdims=True)
        mat = np.divide(mat, rows, out=np.zeros_like(mat), where=rows > 0)
    labels = [format_code(c) for c in cm.classes]
    k = len(labels)
    size = max(4.0, 0.45 * k + 2)
    fig, ax = plt.subplots(figsize=(size + 1, size))
    im = ax.imshow(mat, cmap="Blues", vmin=0, vmax=1 if normalize else None)
    ax.set_xticks(range(k + 1), labels + ["other"], rotation=90)
    ax.set_yticks(range(k), labels)
    ax.set_xlabel("prediction")
    ax.set_ylabel("truth")
    ax.set_title(f"Level {cm.level} confusion")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    return _save(fig, path)


def map_pair(truth, pred, path, taxonomy: ClcTaxonomy | None = None, title: str = "") -> Path:
    """Truth and prediction maps side by side in legend colors."""
    taxonomy = taxonomy or default_taxonomy()
    fig, axes = plt.subplots(1, 2, figsize=(8, 4.4))
    for ax, grid, name in zip(axes, (truth, pred), ("Target", "Prediction")):
        ax.imshow(map_rgb(grid, taxonomy), interpolation="nearest")
        ax.set_title(name)
        ax.axis("off")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)
