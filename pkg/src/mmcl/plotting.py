"""PNG figures for a finished run directory (task-matrix heatmaps, accuracy curves)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_matrix_csv(path: Path) -> np.ndarray:
    """Inverse of ``TaskPerformanceMatrix.to_csv``; blank cells become NaN."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))[1:]
    return np.array([[float(c) if c else np.nan for c in r[1:]] for r in rows], dtype=np.float64)


def plot_matrix(mat: np.ndarray, title: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(np.ma.masked_invalid(mat), vmin=0, vmax=100, cmap="viridis")
    ax.set_xlabel("evaluated task")
    ax.set_ylabel("after training task")
    ax.set_title(title)
    for (i, j), v in np.ndenumerate(mat):
        if np.isfinite(v):
            ax.text(j, i, f"{v:.0f}", ha="center", va="center", fontsize=7, color="w")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_curves(results: dict, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for mode, entry in results["modes"].items():
        curve = entry["mean_accuracy_per_step"]
        mean = np.array(curve["mean"], dtype=float)
        std = np.array(curve["std"], dtype=float)
        x = np.arange(1, len(mean) + 1)
        ax.plot(x, mean, marker="o", label=mode)
        ax.fill_between(x, mean - std, mean + std, alpha=0.2)
    ax.set_xlabel("tasks seen")
    ax.set_ylabel("mean accuracy (%)")
    ax.set_title(results.get("label", ""))
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_run(run_dir: Path, out_dir: Path | None = None) -> list[Path]:
    out_dir = out_dir or run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for csv_path in sorted(run_dir.glob("matrix_*_*.csv")):
        mat = read_matrix_csv(csv_path)
        written.append(plot_matrix(mat, csv_path.stem, out_dir / f"{csv_path.stem}.png"))
    results_path = run_dir / "results.json"
    if results_path.exists():
        written.append(plot_curves(json.loads(results_path.read_text()), out_dir / "accuracy_curves.png"))
    if not written:
        raise ValueError(f"{run_dir}: no matrix CSVs or results.json found")
    return written
