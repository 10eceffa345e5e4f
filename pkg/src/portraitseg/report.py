"""Training and evaluation reports: delimited data plus rendered figures.

Each report writes CSV files next to PNG charts in the chosen directory,
so runs can be compared with standard tooling or eyeballed directly.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .ioutil import atomic_write_bytes
from .training import EvalMetrics


def _write_csv(path: Path, header, rows) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write_bytes(path, buffer.getvalue().encode("utf-8"))


def _write_figure(path: Path, fig) -> None:
    buffer = io.BytesIO()
    fig.savefig(buffer, format="png", dpi=120, bbox_inches="tight")
    plt.close(fig)
    atomic_write_bytes(path, buffer.getvalue())


def write_training_report(directory, history) -> list[Path]:
    """Write loss_history.csv and loss_curve.png; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    csv_path = directory / "loss_history.csv"
    _write_csv(csv_path, ["epoch", "loss"], [(i + 1, loss) for i, loss in enumerate(history)])

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(history) + 1), history, marker="o")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.set_title("Training loss")
    ax.grid(True, alpha=0.3)
    fig_path = directory / "loss_curve.png"
    _write_figure(fig_path, fig)
    return [csv_path, fig_path]


def write_evaluation_report(directory, metrics: EvalMetrics) -> list[Path]:
    """Write metrics.csv, per_sample_iou.csv, and iou_histogram.png."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    metrics_path = directory / "metrics.csv"
    _write_csv(
        metrics_path,
        ["pixel_accuracy", "mean_iou"],
        [(metrics.pixel_accuracy, metrics.mean_iou)],
    )
    per_sample_path = directory / "per_sample_iou.csv"
    _write_csv(
        per_sample_path,
        ["sample", "iou"],
        [(i, iou) for i, iou in enumerate(metrics.per_sample_iou)],
    )

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(metrics.per_sample_iou, bins=20, range=(0.0, 1.0), edgecolor="black")
    ax.axvline(metrics.mean_iou, color="red", linestyle="--", label=f"mean {metrics.mean_iou:.3f}")
    ax.set_xlabel("foreground IoU")
    ax.set_ylabel("samples")
    ax.set_title("Per-sample IoU")
    ax.legend()
    fig_path = directory / "iou_histogram.png"
    _write_figure(fig_path, fig)
    return [metrics_path, per_sample_path, fig_path]
