"""Continual-learning diagnostics computed from the task performance matrix."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import softmax


class TaskPerformanceMatrix:
    """Lower-triangular T x T accuracy matrix; ``values[t, j]`` is the accuracy
    (percent) on task j after training task t. Unfilled entries are NaN."""

    def __init__(self, num_tasks: int):
        self.values = np.full((num_tasks, num_tasks), np.nan)

    @classmethod
    def from_array(cls, arr) -> "TaskPerformanceMatrix":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("task matrix must be square")
        m = cls(arr.shape[0])
        rows, cols = np.tril_indices(arr.shape[0])
        m.values[rows, cols] = arr[rows, cols]
        m.validate()
        return m

    @property
    def num_tasks(self) -> int:
        return self.values.shape[0]

    def set(self, t: int, j: int, acc: float) -> None:
        if j > t:
            raise IndexError("only entries with j <= t exist")
        if not 0 <= acc <= 100:
            raise ValueError(f"accuracy {acc} outside [0, 100]")
        self.values[t, j] = acc

    def validate(self) -> None:
        low = self.values[np.tril_indices(self.num_tasks)]
        low = low[~np.isnan(low)]
        if ((low < 0) | (low > 100)).any():
            raise ValueError("accuracies must lie in [0, 100]")
        if not np.isnan(self.values[np.triu_indices(self.num_tasks, 1)]).all():
            raise ValueError("entries above the diagonal must be empty")

    def is_complete(self) -> bool:
        return not np.isnan(self.values[np.tril_indices(self.num_tasks)]).any()

    def mean_accuracy_per_step(self) -> list[float]:
        return [float(np.mean(self.values[t, : t + 1])) for t in range(self.num_tasks)]

    def final_mean_accuracy(self) -> float:
        return self.mean_accuracy_per_step()[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["after_task"] + [f"task_{j}" for j in range(self.num_tasks)])
        for t in range(self.num_tasks):
            w.writerow([t] + ["" if np.isnan(v) else f"{v:.6f}" for v in self.values[t]])
        return buf.getvalue()

    def to_list(self) -> list[list[float | None]]:
        return [[None if np.isnan(v) else float(v) for v in row] for row in self.values]


def _lower(matrix) -> np.ndarray:
    vals = matrix.values if isinstance(matrix, TaskPerformanceMatrix) else np.asarray(matrix, float)
    out = np.full(vals.shape, np.nan)
    idx = np.tril_indices(vals.shape[0])
    out[idx] = vals[idx]
    return out


def stability_plasticity(matrix) -> tuple[float, float, float]:
    """(stability, plasticity, trade-off) with stability read after the final task.

    Plasticity is the mean of the diagonal; stability the mean accuracy on the
    first T-1 tasks after learning task T; trade-off their harmonic mean.
    """
    vals = _lower(matrix)
    T = vals.shape[0]
    if T < 2:
        raise ValueError("stability needs at least two tasks")
    P = float(np.mean(np.diag(vals)))
    S = float(np.mean(vals[T - 1, : T - 1]))
    tradeoff = 0.0 if S + P == 0 else 2 * S * P / (S + P)
    return S, P, tradeoff


def stability_curve(matrix) -> list[float]:
    """Stability after each task t >= 1 (mean over tasks 0..t-1)."""
    vals = _lower(matrix)
    return [float(np.mean(vals[t, :t])) for t in range(1, vals.shape[0])]


def task_probability_mass(probs: np.ndarray, task_classes: Sequence[Sequence[int]]) -> np.ndarray:
    """Mean predicted probability summed within each task's class group, renormalized.

    Classes outside every group (never trained) are excluded before
    renormalizing; a class present in several groups raises.
    """
    probs = np.asarray(probs, dtype=np.float64)
    owner = {}
    for t, cls in enumerate(task_classes):
        for c in cls:
            if c in owner:
                raise ValueError(f"class {c} mapped to tasks {owner[c]} and {t}")
            owner[int(c)] = t
    mean = probs.mean(axis=0)
    mass = np.array([mean[list(cls)].sum() for cls in task_classes], dtype=np.float64)
    return mass / mass.sum()


def recency_bias(model, audio: np.ndarray, visual: np.ndarray, labels: np.ndarray,
                 task_classes: Sequence[Sequence[int]], mode: str,
                 calibration=None) -> np.ndarray:
    from .inference import calibration_of, head_scores

    mapped = {int(c) for cls in task_classes for c in cls}
    missing = sorted(set(int(y) for y in np.unique(labels)) - mapped)
    if missing:
        raise ValueError(f"classes {missing} are not mapped to any task")
    cal = calibration if calibration is not None else calibration_of(model)
    scores = head_scores(model.logits_numpy(audio, visual), mode, cal)
    return task_probability_mass(softmax(scores, axis=-1), task_classes)


def expected_calibration_error(probs: np.ndarray, labels: np.ndarray, bins: int = 10) -> float:
    """Equal-width bins over max probability, bins closed on the right."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2 or len(probs) == 0:
        raise ValueError("need a nonempty (n, C) probability matrix")
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(np.float64)
    which = np.clip(np.ceil(conf * bins).astype(int) - 1, 0, bins - 1)
    ece = 0.0
    for b in range(bins):
        sel = which == b
        if sel.any():
            ece += sel.mean() * abs(correct[sel].mean() - conf[sel].mean())
    return float(ece)


@dataclass
class CLReport:
    mean_accuracy_per_step: list[float]
    plasticity: float
    stability: float
    tradeoff: float
    stability_per_step: list[float] = field(default_factory=list)
    recency_bias: list[float] = field(default_factory=list)
    ece: float = math.nan

    @property
    def final_mean_accuracy(self) -> float:
        return self.mean_accuracy_per_step[-1]

    @property
    def recency_gap(self) -> float:
        return self.recency_bias[-1] - self.recency_bias[0] if self.recency_bias else math.nan

    def to_dict(self) -> dict:
        d = asdict(self)
        d["final_mean_accuracy"] = self.final_mean_accuracy
        d["recency_gap"] = self.recency_gap
        return d


def build_report(matrix: TaskPerformanceMatrix, recency: Sequence[float] | None = None,
                 ece: float = math.nan) -> CLReport:
    if matrix.num_tasks >= 2:
        S, P, tr = stability_plasticity(matrix)
        curve = stability_curve(matrix)
    else:
        P = float(matrix.values[0, 0])
        S, tr, curve = math.nan, math.nan, []
    return CLReport(matrix.mean_accuracy_per_step(), P, S, tr, curve,
                    list(map(float, recency)) if recency is not None else [], float(ece))
