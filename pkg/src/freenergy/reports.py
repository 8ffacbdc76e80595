"""Delimited metrics output and the figures rendered alongside it."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _fmt(v) -> str:
    # repr round-trips float64 exactly, keeping reruns byte-identical.
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def render_training_figure(path, rows: list[list], eval_label: str) -> None:
    """Train metric and eval metric against epochs, one panel each."""
    if not rows:
        return
    epochs = [r[0] for r in rows]
    train = [r[1] for r in rows]
    evals = [r[2] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, train, marker="o", color="tab:blue")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train metric")
    ax1.set_title("training")
    ax2.plot(epochs, evals, marker="o", color="tab:orange")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel(eval_label)
    ax2.set_title("evaluation")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_compare_figure(path, rows: list[list]) -> None:
    """Test-accuracy curves of both models on shared axes."""
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    for model, color in (("pc", "tab:blue"), ("backprop", "tab:orange")):
        pts = [(r[1], r[3]) for r in rows if r[0] == model]
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", color=color, label=model)
    ax.set_xlabel("epoch")
    ax.set_ylabel("test accuracy")
    ax.legend()
    gap = rows[-1][4]
    ax.set_title(f"final accuracy gap {gap:.4f}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_reconstruction_figure(path, originals, corrupted, retrieved, max_items: int = 8) -> None:
    """Original / corrupted / retrieved triplets when items form square images."""
    n = min(len(originals), max_items)
    if n == 0:
        return
    side = int(round(np.sqrt(originals[0].size)))
    if side * side != originals[0].size:
        return  # nothing sensible to draw for non-square items
    fig, axes = plt.subplots(3, n, figsize=(1.2 * n, 3.8), squeeze=False)
    for col in range(n):
        for row, (stack, label) in enumerate(
            ((originals, "original"), (corrupted, "cue"), (retrieved, "retrieved"))
        ):
            ax = axes[row][col]
            ax.imshow(np.asarray(stack[col]).reshape(side, side), cmap="gray")
            ax.set_xticks([])
            ax.set_yticks([])
            if col == 0:
                ax.set_ylabel(label, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
