"""Loss-curve rendering to SVG (headless backend, no display needed)."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def read_loss_curve(csv_path: str) -> tuple[list[int], list[float]]:
    """(steps, train losses) from a metrics CSV, skipping eval-only rows."""
    steps: list[int] = []
    losses: list[float] = []
    with open(csv_path, "r", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "train_loss" not in reader.fieldnames:
            raise ValueError(f"{csv_path}: not a metrics CSV")
        for row in reader:
            cell = row.get("train_loss", "")
            if cell:
                steps.append(int(row["step"]))
                losses.append(float(cell))
    if not steps:
        raise ValueError(f"{csv_path}: no loss rows to plot")
    return steps, losses


def plot_loss_curves(csv_paths: list[str], out_path: str) -> None:
    """One polyline per input CSV; raises ValueError on empty inputs."""
    if not csv_paths:
        raise ValueError("no CSV files given")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for path in csv_paths:
        steps, losses = read_loss_curve(path)
        label = os.path.splitext(os.path.basename(path))[0]
        ax.plot(steps, losses, label=label)
    ax.set_xlabel("step")
    ax.set_ylabel("train loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
