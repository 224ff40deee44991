"""Matplotlib figures rendered to files next to the delimited reports.

Every function takes data already computed elsewhere and writes one
PNG; nothing here recomputes metrics.  The Agg backend keeps rendering
headless-safe.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update(
    {
        "figure.dpi": 110,
        "savefig.dpi": 150,
        "savefig.bbox": "tight",
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 10,
    }
)


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def save_training_curve(epoch_logs, path: str | Path) -> Path:
    """Loss per epoch, with accuracy on a twin axis when logged."""
    epochs = [log.epoch + 1 for log in epoch_logs]
    losses = [log.mean_loss for log in epoch_logs]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, losses, marker="o", color="tab:blue", label="mean batch loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    accs = [log.top1 for log in epoch_logs]
    if all(a is not None for a in accs):
        twin = ax.twinx()
        twin.plot(epochs, accs, marker="s", color="tab:orange", label="top-1")
        twin.set_ylabel("top-1 accuracy")
        twin.set_ylim(0, 1.02)
        twin.grid(False)
    ax.set_title("training curve")
    return _finish(fig, path)


def save_similarity_heatmap(matrix: np.ndarray, path: str | Path, title: str = "image-text cosine") -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 5))
    im = ax.imshow(matrix, cmap="viridis", aspect="auto")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_xlabel("prompt")
    ax.set_ylabel("image")
    ax.set_title(title)
    ax.grid(False)
    return _finish(fig, path)


def save_confusion_heatmaps(matrices, out_dir: str | Path) -> list[Path]:
    """One normalized-confusion PNG per superclass."""
    out_dir = Path(out_dir)
    paths = []
    for cm in matrices:
        size = max(3.5, 0.45 * len(cm.class_names) + 1.5)
        fig, ax = plt.subplots(figsize=(size + 1, size))
        im = ax.imshow(cm.normalized, cmap="Blues", vmin=0, vmax=1)
        fig.colorbar(im, ax=ax, shrink=0.8)
        ticks = cm.class_names + ["outside"]
        ax.set_xticks(range(len(ticks)), ticks, rotation=90, fontsize=7)
        ax.set_yticks(range(len(cm.class_names)), cm.class_names, fontsize=7)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(f"{cm.l1_name}: column-normalized confusion")
        ax.grid(False)
        slug = cm.l1_name.lower().replace(" ", "-")
        paths.append(_finish(fig, out_dir / f"confusion-{slug}.png"))
    return paths


def save_frugality_curve(sweep, path: str | Path) -> Path:
    """Accuracy against the per-class budget, largest budget first."""
    caps = [row.cap for row in sweep.rows]
    accs = [row.top1 for row in sweep.rows]
    counts = [row.train_count for row in sweep.rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(caps, accs, marker="o", color="tab:green")
    for cap, acc, count in zip(caps, accs, counts):
        ax.annotate(f"n={count}", (cap, acc), textcoords="offset points", xytext=(6, -12), fontsize=8)
    ax.set_xlabel("training images per class (cap)")
    ax.set_ylabel("top-1 accuracy")
    ax.set_ylim(0, 1.02)
    ax.invert_xaxis()
    ax.set_title("accuracy vs per-class training budget")
    return _finish(fig, path)


def save_comparison_chart(report, path: str | Path) -> Path:
    """Three panels: accuracy, fine-tuning minutes, inference latency."""
    names = [row["name"] for row in report.rows]
    panels = (
        ("top1", "top-1 accuracy", [row["top1"] for row in report.rows], (0, 1.05)),
        ("minutes", "fine-tuning minutes", [row["minutes"] for row in report.rows], None),
        ("latency_ms", "inference ms / sample", [row["latency_ms"] for row in report.rows], None),
    )
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.6))
    colors = ["tab:blue", "tab:orange"]
    for ax, (_, label, values, ylim) in zip(axes, panels):
        ax.bar(names, values, color=colors[: len(names)])
        ax.set_title(label, fontsize=10)
        if ylim:
            ax.set_ylim(*ylim)
        for i, v in enumerate(values):
            ax.annotate(f"{v:.3g}", (i, v), ha="center", va="bottom", fontsize=8)
    fig.suptitle("contrastive model vs vision-only baseline")
    return _finish(fig, path)


def save_repeat_stats_chart(stats, path: str | Path) -> Path:
    """Mean with std error bars per taxonomy level."""
    levels = list(stats.mean)
    means = [stats.mean[lvl] for lvl in levels]
    stds = [stats.std[lvl] for lvl in levels]
    fig, ax = plt.subplots(figsize=(5, 3.8))
    ax.bar(levels, means, yerr=stds, capsize=6, color="tab:purple", alpha=0.85)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("top-1 accuracy")
    ax.set_title(f"repeated splits (n={stats.repeats})")
    return _finish(fig, path)
