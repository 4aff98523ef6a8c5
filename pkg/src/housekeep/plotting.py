"""Report figures, rendered headless to image files."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import Summary  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_es_at_k(curves: Mapping[str, Mapping[int, float]], path: str | Path) -> Path:
    """ES@K against the number of rearrangements, one line per run."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, curve in curves.items():
        ks = sorted(curve)
        ax.plot(ks, [curve[k] for k in ks], marker="o", label=label)
    ax.set_xlabel("K (rearrangements)")
    ax.set_ylabel("ES@K")
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3)
    if curves:
        ax.legend(fontsize=8)
    return _save(fig, path)


def plot_metric_bars(rows: Mapping[str, Mapping[str, Summary]], metrics: Sequence[str], path: str | Path) -> Path:
    """Grouped bars (mean with stderr whiskers) for metrics on a [0, 1] scale."""
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(metrics), 3.5))
    labels = list(rows)
    width = 0.8 / max(1, len(labels))
    x = np.arange(len(metrics))
    for i, label in enumerate(labels):
        means = [rows[label][m].mean for m in metrics]
        errs = [rows[label][m].stderr for m in metrics]
        ax.bar(x + i * width - 0.4 + width / 2, means, width, yerr=errs, capsize=2, label=label)
    ax.set_xticks(x, metrics)
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_kappa_hist(kappas: Mapping[str, float], path: str | Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    vals = [v for v in kappas.values() if np.isfinite(v)]
    ax.hist(vals, bins=20, range=(-0.2, 1.0), color="tab:blue", alpha=0.8)
    ax.set_xlabel("Fleiss' kappa per object")
    ax.set_ylabel("objects")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_losses(orr: Sequence[float], or_: Sequence[float], validation: Sequence[dict], path: str | Path) -> Path:
    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
    epochs = np.arange(1, len(orr) + 1)
    a.plot(epochs, orr, label="ORR (InfoNCE)")
    a.plot(epochs, or_, label="OR (BCE)")
    a.set_xlabel("epoch")
    a.set_ylabel("loss")
    a.set_yscale("log")
    a.legend(fontsize=8)
    if validation:
        ep = [v["epoch"] for v in validation]
        b.plot(ep, [v["OR"] for v in validation], label="OR mAP")
        b.plot(ep, [v["ORR"] for v in validation], label="ORR mAP")
        b.set_ylim(0, 1.05)
        b.legend(fontsize=8)
    b.set_xlabel("epoch")
    b.set_ylabel("validation mAP")
    return _save(fig, path)
