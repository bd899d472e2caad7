"""Supervised, consistency, relational feature-alignment and combined objectives."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .model import ForwardOutput

# candidate order doubles as the tie-break order
HEAD_ORDER = ("av", "a", "v")


@dataclass(frozen=True)
class LossWeights:
    lam: float = 0.01
    beta: float = 1.0
    # 1.0 is the unweighted objective; 0.0 ablates alignment
    alignment: float = 1.0
    reference_heads: tuple[str, ...] = HEAD_ORDER

    def __post_init__(self):
        for name in ("lam", "beta", "alignment"):
            v = float(getattr(self, name))
            if not (v >= 0 and v < float("inf")):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not self.reference_heads or any(h not in HEAD_ORDER for h in self.reference_heads):
            raise ValueError(f"reference_heads must be a nonempty subset of {HEAD_ORDER}")


def _check_labels(labels: torch.Tensor, num_classes: int) -> None:
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")


def supervised_loss(out: ForwardOutput, labels: torch.Tensor, lam: float) -> torch.Tensor:
    _check_labels(labels, out.z_av.shape[1])
    loss = F.cross_entropy(out.z_av, labels)
    if lam:
        loss = loss + lam * (F.cross_entropy(out.z_a, labels) + F.cross_entropy(out.z_v, labels))
    return loss


def select_reference_logits(z_a: torch.Tensor, z_v: torch.Tensor, z_av: torch.Tensor,
                            labels: torch.Tensor,
                            heads: tuple[str, ...] = HEAD_ORDER) -> torch.Tensor:
    """Per sample, the stored logit vector giving the label the highest softmax probability.

    Works on batches ``(n, C)``; ties resolve to the earliest entry of ``HEAD_ORDER``.
    """
    if not (z_a.shape == z_v.shape == z_av.shape):
        raise ValueError("stored logit vectors must share a shape")
    pool = {"av": z_av, "a": z_a, "v": z_v}
    heads = tuple(h for h in HEAD_ORDER if h in heads)
    stacked = torch.stack([pool[h] for h in heads])  # (H, n, C)
    idx = labels.view(1, -1, 1).expand(len(heads), -1, 1)
    p_label = torch.softmax(stacked, dim=-1).gather(-1, idx).squeeze(-1)  # (H, n)
    # torch.argmax returns the first maximum, which implements the tie rule
    best = torch.argmax(p_label, dim=0)
    return stacked[best, torch.arange(stacked.shape[1])]


def consistency_loss(out: ForwardOutput, z_ref: torch.Tensor, lam: float) -> torch.Tensor:
    if out.z_av.shape != z_ref.shape:
        raise ValueError(f"reference logits {tuple(z_ref.shape)} do not match {tuple(out.z_av.shape)}")
    loss = F.mse_loss(out.z_av, z_ref)
    if lam:
        loss = loss + lam * (F.mse_loss(out.z_a, z_ref) + F.mse_loss(out.z_v, z_ref))
    return loss


def _pairwise_distances(f: torch.Tensor) -> torch.Tensor:
    """Euclidean distances over unordered pairs i < j; gradient 0 at coincident points."""
    i, j = torch.triu_indices(f.shape[0], f.shape[0], offset=1)
    sq = (f[i] - f[j]).pow(2).sum(dim=1)
    pos = sq > 0
    return torch.where(pos, sq.clamp_min(torch.finfo(f.dtype).tiny).sqrt(), torch.zeros_like(sq))


def _normalized(d: torch.Tensor, modality: str) -> torch.Tensor:
    mu = d.mean()
    if float(mu.detach()) == 0.0:
        warnings.warn(f"all {modality} features coincide; using unit distance normalizer",
                      RuntimeWarning, stacklevel=3)
        return d
    return d / mu


def feature_alignment_loss(f_a: torch.Tensor, f_v: torch.Tensor, delta: float = 1.0) -> torch.Tensor:
    """Mean Huber discrepancy between the mean-normalized pairwise distances of two views."""
    if f_a.shape[0] < 2:
        raise ValueError("feature alignment needs a batch of at least 2")
    if f_a.shape != f_v.shape:
        raise ValueError(f"feature shapes differ: {tuple(f_a.shape)} vs {tuple(f_v.shape)}")
    psi_a = _normalized(_pairwise_distances(f_a), "audio")
    psi_v = _normalized(_pairwise_distances(f_v), "visual")
    return F.huber_loss(psi_a, psi_v, delta=delta, reduction="mean")


def total_loss(task_out: ForwardOutput, task_labels: torch.Tensor,
               buffer_out: ForwardOutput | None, buffer_labels: torch.Tensor | None,
               buffer_logits: tuple[torch.Tensor, torch.Tensor, torch.Tensor] | None,
               weights: LossWeights) -> tuple[torch.Tensor, dict[str, float]]:
    """Combined objective; buffer terms are 0 when ``buffer_out`` is None.

    ``buffer_logits`` is the stored ``(z_a, z_v, z_av)`` triple for the buffer batch.
    Alignment is computed separately on the task batch and the buffer batch.
    """
    zero = task_out.z_av.new_zeros(())
    parts = {"sup_task": supervised_loss(task_out, task_labels, weights.lam)}
    parts["fa_task"] = (feature_alignment_loss(task_out.f_a, task_out.f_v)
                        if task_out.f_a.shape[0] >= 2 else zero)
    if buffer_out is not None:
        parts["sup_buf"] = supervised_loss(buffer_out, buffer_labels, weights.lam)
        if weights.beta:
            z_ref = select_reference_logits(*buffer_logits, buffer_labels, weights.reference_heads)
            parts["cr_buf"] = consistency_loss(buffer_out, z_ref, weights.lam)
        else:
            parts["cr_buf"] = zero
        parts["fa_buf"] = (feature_alignment_loss(buffer_out.f_a, buffer_out.f_v)
                           if buffer_out.f_a.shape[0] >= 2 else zero)
    else:
        parts["sup_buf"] = parts["cr_buf"] = parts["fa_buf"] = zero
    loss = (parts["sup_task"] + parts["sup_buf"] + weights.beta * parts["cr_buf"]
            + weights.alignment * (parts["fa_task"] + parts["fa_buf"]))
    return loss, {k: float(v.detach()) for k, v in parts.items()}
