"""Head-wise and confidence-weighted prediction, plus temperature scaling."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.special import log_softmax, softmax

Mode = Literal["AUDIO", "VISUAL", "MULTI", "DYNAMIC"]
MODES: tuple[str, ...] = ("AUDIO", "VISUAL", "MULTI", "DYNAMIC")


@dataclass(frozen=True)
class CalibrationState:
    T_a: float = 1.0
    T_v: float = 1.0
    T_av: float = 1.0

    def __post_init__(self):
        for t in (self.T_a, self.T_v, self.T_av):
            if not (math.isfinite(t) and t > 0):
                raise ValueError(f"temperatures must be positive and finite, got {t}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.T_a, self.T_v, self.T_av)


def dynamic_ensemble(z_a: np.ndarray, z_v: np.ndarray, z_av: np.ndarray,
                     calibration: CalibrationState = CalibrationState(),
                     scale_logits: bool = True) -> np.ndarray:
    """Sum of the three heads' logits, each weighted by its own max softmax confidence.

    Confidences always use temperature-scaled logits; with ``scale_logits``
    the summed logits are the scaled ones too. Accepts ``(C,)`` or ``(n, C)``.
    """
    heads = [np.asarray(z, dtype=np.float64) for z in (z_a, z_v, z_av)]
    if not (heads[0].shape == heads[1].shape == heads[2].shape):
        raise ValueError("logit vectors must share a shape")
    if not all(np.isfinite(z).all() for z in heads):
        raise ValueError("non-finite logits")
    out = np.zeros_like(heads[0])
    for z, t in zip(heads, calibration.as_tuple()):
        zt = z / t
        w = softmax(zt, axis=-1).max(axis=-1, keepdims=True)
        out = out + w * (zt if scale_logits else z)
    return out


def head_scores(logits: tuple[np.ndarray, np.ndarray, np.ndarray], mode: str,
                calibration: CalibrationState = CalibrationState(),
                scale_logits: bool = True) -> np.ndarray:
    """Score matrix for ``mode`` from raw ``(z_a, z_v, z_av)``."""
    z_a, z_v, z_av = logits
    t_a, t_v, t_av = calibration.as_tuple()
    if mode == "AUDIO":
        return np.asarray(z_a) / t_a
    if mode == "VISUAL":
        return np.asarray(z_v) / t_v
    if mode == "MULTI":
        return np.asarray(z_av) / t_av
    if mode == "DYNAMIC":
        return dynamic_ensemble(z_a, z_v, z_av, calibration, scale_logits)
    raise ValueError(f"unknown inference mode {mode!r}")


def predict(model, audio: np.ndarray, visual: np.ndarray, mode: str,
            calibration: CalibrationState | None = None,
            scale_logits: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Predicted class ids (lowest id wins ties) and score vectors for a batch."""
    audio = np.atleast_2d(audio)
    visual = np.atleast_2d(visual)
    if calibration is None:
        calibration = calibration_of(model)
    scores = head_scores(model.logits_numpy(audio, visual), mode, calibration, scale_logits)
    return np.argmax(scores, axis=-1), scores


def calibration_of(model) -> CalibrationState:
    return CalibrationState(*(float(t) for t in model.temperatures))


def install_calibration(model, calibration: CalibrationState) -> None:
    model.temperatures.copy_(model.temperatures.new_tensor(calibration.as_tuple()))


def nll_at_temperature(logits: np.ndarray, labels: np.ndarray, T: float) -> float:
    lp = log_softmax(np.asarray(logits, dtype=np.float64) / T, axis=-1)
    return float(-lp[np.arange(len(labels)), labels].mean())


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-4) -> float:
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2


def fit_temperature(logits: np.ndarray, labels: np.ndarray, log_bounds=(-3.0, 3.0),
                    tol: float = 1e-4, grid_points: int = 64) -> float:
    """Temperature minimizing mean NLL, searched over log T.

    A coarse grid picks the bracket so a non-unimodal objective cannot trap
    the golden-section refinement; T = 1 is kept if nothing beats it.
    """
    labels = np.asarray(labels, dtype=np.int64)

    def obj(log_t: float) -> float:
        return nll_at_temperature(logits, labels, math.exp(log_t))

    lo, hi = log_bounds
    grid = np.linspace(lo, hi, grid_points)
    vals = np.array([obj(g) for g in grid])
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid_points - 1)]
    refined = golden_section(obj, a, b, tol)
    candidates = [(obj(refined), refined), (vals[k], grid[k]), (obj(0.0), 0.0)]
    return math.exp(min(candidates)[1])


def calibrate(model, audio: np.ndarray, visual: np.ndarray, labels: np.ndarray,
              install: bool = True) -> CalibrationState:
    """Fit one temperature per head on (buffer) samples and install them in the model."""
    if len(labels) == 0:
        warnings.warn("calibration set is empty; temperatures unchanged", RuntimeWarning, stacklevel=2)
        return calibration_of(model)
    z_a, z_v, z_av = model.logits_numpy(audio, visual)
    state = CalibrationState(*(fit_temperature(z, labels) for z in (z_a, z_v, z_av)))
    if install:
        install_calibration(model, state)
    return state
