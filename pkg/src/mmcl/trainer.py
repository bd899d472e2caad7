"""Continual training over a task stream for SAMM and the ER / SGD / JOINT baselines."""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from scipy.special import softmax

from .inference import calibrate, calibration_of, head_scores
from .losses import LossWeights, supervised_loss, total_loss
from .metrics import TaskPerformanceMatrix, expected_calibration_error, task_probability_mass
from .model import ForwardOutput, ModelConfig, MultimodalNet
from .replay import BufferEntry, ReservoirBuffer
from .scenarios import ScenarioStream

Method = Literal["SAMM", "ER", "SGD", "JOINT"]
ModalityMode = Literal["AUDIO_ONLY", "VISUAL_ONLY", "MULTIMODAL"]


@dataclass(frozen=True)
class ModelOptions:
    hidden_dim: int = 64
    feature_dim: int = 32
    fused_dim: int = 32
    width_multiplier: float = 1.0
    film_direction: str = "audio_to_visual"


@dataclass(frozen=True)
class TrainConfig:
    method: Method = "SAMM"
    modality_mode: ModalityMode = "MULTIMODAL"
    epochs_per_task: int = 10
    batch_size: int = 32
    learning_rate: float = 0.1
    buffer_capacity: int = 200
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    calibrate: bool | None = None
    scale_ensemble_logits: bool = True
    observe_epoch: Literal["first", "last"] = "last"
    grad_clip: float | None = 5.0
    model: ModelOptions = field(default_factory=ModelOptions)

    def validate(self) -> None:
        if self.method not in ("SAMM", "ER", "SGD", "JOINT"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.modality_mode not in ("AUDIO_ONLY", "VISUAL_ONLY", "MULTIMODAL"):
            raise ValueError(f"unknown modality_mode {self.modality_mode!r}")
        if self.method == "SAMM" and self.modality_mode != "MULTIMODAL":
            raise ValueError("SAMM trains all heads jointly and needs modality_mode=MULTIMODAL")
        if self.epochs_per_task < 0 or self.batch_size < 1 or self.buffer_capacity < 0:
            raise ValueError("epochs_per_task >= 0, batch_size >= 1, buffer_capacity >= 0 required")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.method in ("SAMM", "ER") and self.buffer_capacity < 1:
            raise ValueError(f"{self.method} needs buffer_capacity >= 1")

    @property
    def uses_buffer(self) -> bool:
        return self.method in ("SAMM", "ER")

    @property
    def calibrates(self) -> bool:
        if self.calibrate is None:
            return self.method == "SAMM"
        return self.calibrate and self.uses_buffer


def available_modes(config: TrainConfig) -> tuple[str, ...]:
    """Inference modes whose heads the configuration actually trains."""
    if config.method == "SAMM":
        return ("AUDIO", "VISUAL", "MULTI", "DYNAMIC")
    return {"AUDIO_ONLY": ("AUDIO",), "VISUAL_ONLY": ("VISUAL",),
            "MULTIMODAL": ("MULTI",)}[config.modality_mode]


def canonical_mode(config: TrainConfig) -> str:
    """The mode reported as a run's headline accuracy."""
    if config.method == "SAMM":
        return "DYNAMIC"
    return available_modes(config)[0]


@dataclass
class TrainResult:
    model: MultimodalNet
    matrices: dict[str, TaskPerformanceMatrix]
    record: dict
    buffer: ReservoirBuffer | None = None


def _baseline_loss(out: ForwardOutput, labels: torch.Tensor, modality_mode: str) -> torch.Tensor:
    if modality_mode == "AUDIO_ONLY":
        return F.cross_entropy(out.z_a, labels)
    if modality_mode == "VISUAL_ONLY":
        return F.cross_entropy(out.z_v, labels)
    return supervised_loss(out, labels, lam=0.0)


def _split(out: ForwardOutput, n: int) -> tuple[ForwardOutput, ForwardOutput]:
    return (ForwardOutput(*(x[:n] for x in out)), ForwardOutput(*(x[n:] for x in out)))


def build_model(stream: ScenarioStream, config: TrainConfig) -> MultimodalNet:
    first = stream.tasks[0].train
    mc = ModelConfig(dim_audio=first.dim_audio, dim_visual=first.dim_visual,
                     num_classes=stream.num_targets, seed=config.seed, **asdict(config.model))
    return MultimodalNet(mc)


def evaluate_tasks(model: MultimodalNet, stream: ScenarioStream, upto: int,
                   modes: Sequence[str], scale_logits: bool = True) -> dict[str, list[float]]:
    """Test accuracy (percent) on tasks 0..upto for each mode, using installed temperatures."""
    cal = calibration_of(model)
    out: dict[str, list[float]] = {m: [] for m in modes}
    for j in range(upto + 1):
        test = stream.tasks[j].test
        y = test.targets(stream.target_kind)
        logits = model.logits_numpy(test.audio, test.visual)
        for m in modes:
            if len(y) == 0:
                out[m].append(0.0)
                continue
            pred = np.argmax(head_scores(logits, m, cal, scale_logits), axis=1)
            out[m].append(float(100.0 * np.mean(pred == y)))
    return out


def evaluate_task_matrix(snapshots: Sequence[MultimodalNet], stream: ScenarioStream, mode: str,
                         config: TrainConfig | None = None) -> TaskPerformanceMatrix:
    """Task matrix from per-task model snapshots (``snapshots[t]`` trained through task t)."""
    if config is not None and mode not in available_modes(config):
        raise ValueError(f"mode {mode} needs a head that {config.method}/{config.modality_mode} does not train")
    m = TaskPerformanceMatrix(len(stream))
    for t, model in enumerate(snapshots):
        for j, acc in enumerate(evaluate_tasks(model, stream, t, [mode])[mode]):
            m.set(t, j, acc)
    return m


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for s in range(0, n, batch_size):
        yield perm[s:s + batch_size]


def train_stream(stream: ScenarioStream, config: TrainConfig,
                 log: Callable[[dict], None] | None = None) -> TrainResult:
    config.validate()
    if config.method == "SGD" and config.buffer_capacity > 0:
        warnings.warn("SGD ignores buffer_capacity", RuntimeWarning, stacklevel=2)
    return _train(stream, config, log or (lambda rec: None))


def _train(stream: ScenarioStream, config: TrainConfig, log: Callable[[dict], None]) -> TrainResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng([config.seed, 0x7A1])
    model = build_model(stream, config)
    dtype = next(model.parameters()).dtype
    opt = torch.optim.SGD(model.parameters(), lr=config.learning_rate)
    buffer = ReservoirBuffer(config.buffer_capacity, np.random.default_rng([config.seed, 0xB0F]))
    modes = available_modes(config)
    T = len(stream)
    matrices = {m: TaskPerformanceMatrix(T) for m in modes}
    record: dict = {"seed": config.seed, "config": asdict(config), "tasks": [], "temperatures": []}
    kind = stream.target_kind
    step = 0

    def as_t(x: np.ndarray) -> torch.Tensor:
        return torch.as_tensor(x, dtype=dtype)

    def run_epochs(task_id: int, data, observe: bool) -> dict[str, float]:
        nonlocal step
        xa_all, xv_all = data.audio, data.visual
        y_all = data.targets(kind)
        sums: dict[str, float] = {}
        count = 0
        observe_at = 0 if config.observe_epoch == "first" else config.epochs_per_task - 1
        for epoch in range(config.epochs_per_task):
            for idx in _batches(len(y_all), config.batch_size, rng):
                xa, xv, y = as_t(xa_all[idx]), as_t(xv_all[idx]), torch.as_tensor(y_all[idx])
                n = len(idx)
                buf = buffer.sample(config.batch_size, rng) if config.uses_buffer else None
                has_buf = buf is not None and len(buf) > 0
                if has_buf:
                    out_all = model(torch.cat([xa, as_t(buf.audio)]), torch.cat([xv, as_t(buf.visual)]))
                    out, bout = _split(out_all, n)
                    by = torch.as_tensor(buf.labels)
                else:
                    out, bout, by = model(xa, xv), None, None
                if config.method == "SAMM":
                    stored = (as_t(buf.z_a), as_t(buf.z_v), as_t(buf.z_av)) if has_buf else None
                    loss, parts = total_loss(out, y, bout, by, stored, config.weights)
                else:
                    loss = _baseline_loss(out, y, config.modality_mode)
                    parts = {"sup_task": float(loss.detach())}
                    if has_buf:
                        lb = _baseline_loss(bout, by, config.modality_mode)
                        loss = loss + lb
                        parts["sup_buf"] = float(lb.detach())
                parts["total"] = float(loss.detach())
                opt.zero_grad(set_to_none=True)
                loss.backward()
                if config.grad_clip:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
                opt.step()
                # reservoir sees each stream sample once per task, during one chosen epoch
                if observe and epoch == observe_at:
                    za, zv, zav = (z.detach().double().numpy() for z in (out.z_a, out.z_v, out.z_av))
                    for i, k in enumerate(idx):
                        buffer.observe(BufferEntry(xa_all[k], xv_all[k], int(y_all[k]),
                                                   za[i], zv[i], zav[i]))
                log({"step": step, "task": task_id, "epoch": epoch, **parts})
                step += 1
                for k, v in parts.items():
                    sums[k] = sums.get(k, 0.0) + v * n
                count += n
        return {k: v / count for k, v in sums.items()} if count else {}

    def end_of_task(task_id: int) -> None:
        if config.calibrates and len(buffer):
            b = buffer.all()
            calibrate(model, b.audio, b.visual, b.labels)
        record["temperatures"].append([float(t) for t in model.temperatures])

    if config.method == "JOINT":
        from .datagen import PairedDataset

        union = PairedDataset.concat([t.train for t in stream.tasks])
        losses = run_epochs(T - 1, union, observe=False)
        end_of_task(T - 1)
        final = evaluate_tasks(model, stream, T - 1, modes, config.scale_ensemble_logits)
        # a single model exists; every row reports it on the tasks seen by that step
        for t in range(T):
            for m in modes:
                for j in range(t + 1):
                    matrices[m].set(t, j, final[m][j])
        record["tasks"].append({"task": "joint", "losses": losses})
    else:
        for t, task in enumerate(stream.tasks):
            losses = run_epochs(t, task.train, observe=config.uses_buffer)
            end_of_task(t)
            accs = evaluate_tasks(model, stream, t, modes, config.scale_ensemble_logits)
            for m in modes:
                for j, a in enumerate(accs[m]):
                    matrices[m].set(t, j, a)
            record["tasks"].append({"task": t, "losses": losses,
                                    "buffer_size": len(buffer), "seen": buffer.seen})

    record["diagnostics"] = final_diagnostics(model, stream, modes, config.scale_ensemble_logits)
    record["matrices"] = {m: mat.to_list() for m, mat in matrices.items()}
    record["wall_clock_s"] = time.perf_counter() - t0
    return TrainResult(model, matrices, record, buffer if config.uses_buffer else None)


def final_diagnostics(model: MultimodalNet, stream: ScenarioStream, modes: Sequence[str],
                      scale_logits: bool = True) -> dict[str, dict]:
    """Recency bias and ECE of the final model over the union of all test splits."""
    from .datagen import PairedDataset

    test = PairedDataset.concat([t.test for t in stream.tasks])
    y = test.targets(stream.target_kind)
    logits = model.logits_numpy(test.audio, test.visual)
    cal = calibration_of(model)
    classes = stream.task_classes()
    partition = (stream.target_kind == "CLASS_LABEL"
                 and len({c for cls in classes for c in cls}) == sum(len(c) for c in classes))
    out = {}
    for m in modes:
        probs = softmax(head_scores(logits, m, cal, scale_logits), axis=1)
        out[m] = {
            "recency_bias": task_probability_mass(probs, classes).tolist() if partition else None,
            "ece": expected_calibration_error(probs, y) if len(y) else None,
        }
    return out
