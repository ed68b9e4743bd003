"""Evaluation and training reports: CSV tables plus matplotlib figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METRIC_COLUMNS = ("psnr", "ssim", "delta_e")


def write_metrics_csv(rows: list[dict], aggregates: dict, path: str | Path) -> None:
    """Per-image metric rows followed by a mean aggregate row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("id",) + METRIC_COLUMNS)
        for row in rows:
            writer.writerow([row["id"]] + [f"{row[m]:.6f}" for m in METRIC_COLUMNS])
        writer.writerow(["mean"] + [f"{aggregates[m]:.6f}" for m in METRIC_COLUMNS])


def render_metrics_figure(rows: list[dict], aggregates: dict, path: str | Path) -> None:
    """Per-image bars for each metric with the mean drawn as a line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ids = [row["id"] for row in rows]
    fig, axes = plt.subplots(len(METRIC_COLUMNS), 1, figsize=(max(6, 0.5 * len(ids)), 9))
    for ax, metric in zip(axes, METRIC_COLUMNS):
        values = [row[metric] for row in rows]
        ax.bar(range(len(ids)), values, color="#4878a8")
        ax.axhline(aggregates[metric], color="#c44e52", linewidth=1.2, label="mean")
        ax.set_ylabel(metric)
        ax.set_xticks(range(len(ids)))
        ax.set_xticklabels(ids, rotation=60, fontsize=7, ha="right")
        ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_history_csv(history: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not history:
        return
    fields: dict[str, None] = {}
    for row in history:
        fields.update(dict.fromkeys(row))
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields), restval="")
        writer.writeheader()
        writer.writerows(history)


def render_loss_curve(history: list[dict], path: str | Path) -> None:
    """Total loss against step on a log scale, with the learning rate."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not history:
        return
    steps = [h["step"] for h in history]
    totals = [h["total"] for h in history]
    lrs = [h["lr"] for h in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, totals, color="#4878a8", linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("total loss")
    ax.set_yscale("log")
    ax2 = ax.twinx()
    ax2.plot(steps, lrs, color="#c44e52", linewidth=0.8, alpha=0.7)
    ax2.set_ylabel("learning rate")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_comparison(
    low: np.ndarray, enhanced: np.ndarray, normal: np.ndarray | None, path: str | Path
) -> None:
    """Side-by-side input / enhanced (/ reference) panel."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    panels = [("input", low), ("enhanced", enhanced)]
    if normal is not None:
        panels.append(("target", normal))
    fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 4))
    for ax, (title, img) in zip(np.atleast_1d(axes), panels):
        ax.imshow(np.clip(img, 0, 1))
        ax.set_title(title, fontsize=10)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
