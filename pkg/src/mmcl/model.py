"""Dual-encoder audio-visual network with FiLM fusion and three heads."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from .blobio import load_arrays, save_arrays


@dataclass(frozen=True)
class ModelConfig:
    dim_audio: int
    dim_visual: int
    num_classes: int
    hidden_dim: int = 64
    feature_dim: int = 32
    fused_dim: int = 32
    width_multiplier: float = 1.0
    film_direction: str = "audio_to_visual"
    seed: int = 0

    def width(self, w: int) -> int:
        return max(1, math.ceil(w * self.width_multiplier))


class ForwardOutput(NamedTuple):
    f_a: torch.Tensor
    f_v: torch.Tensor
    f_av: torch.Tensor
    z_a: torch.Tensor
    z_v: torch.Tensor
    z_av: torch.Tensor


class Encoder(nn.Module):
    """Two-layer MLP; SiLU keeps finite-difference checks clean."""

    def __init__(self, d_in: int, hidden: int, d_out: int):
        super().__init__()
        self.fc1 = nn.Linear(d_in, hidden)
        self.fc2 = nn.Linear(hidden, d_out)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(nn.functional.silu(self.fc1(x)))


class FiLMFusion(nn.Module):
    def __init__(self, feature_dim: int, fused_dim: int):
        super().__init__()
        self.gamma = nn.Linear(feature_dim, feature_dim)
        self.delta = nn.Linear(feature_dim, feature_dim)
        self.out = nn.Linear(feature_dim, fused_dim)

    def forward(self, cond: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        return self.out(self.gamma(cond) * target + self.delta(cond))


class MultimodalNet(nn.Module):
    """Audio encoder, visual encoder, fusion and heads; temperatures live in a buffer."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        h, f, fu = config.width(config.hidden_dim), config.width(config.feature_dim), config.width(config.fused_dim)
        self.audio_encoder = Encoder(config.dim_audio, h, f)
        self.visual_encoder = Encoder(config.dim_visual, h, f)
        self.fusion = FiLMFusion(f, fu)
        self.head_a = nn.Linear(f, config.num_classes)
        self.head_v = nn.Linear(f, config.num_classes)
        self.head_av = nn.Linear(fu, config.num_classes)
        self.register_buffer("temperatures", torch.ones(3, dtype=torch.float64))
        self.reset_parameters(config.seed)

    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for mod in self.modules():
                if isinstance(mod, nn.Linear):
                    std = 1.0 / math.sqrt(mod.in_features)
                    mod.weight.copy_(torch.randn(mod.weight.shape, generator=gen) * std)
                    mod.bias.zero_()
            # identity-centred modulation at init
            self.fusion.gamma.bias.fill_(1.0)
            self.fusion.gamma.weight.mul_(0.1)
            self.fusion.delta.weight.mul_(0.1)

    def fuse(self, f_a: torch.Tensor, f_v: torch.Tensor) -> torch.Tensor:
        if f_a.shape != f_v.shape:
            raise ValueError(f"fusion needs equal feature shapes, got {tuple(f_a.shape)} and {tuple(f_v.shape)}")
        if self.config.film_direction == "visual_to_audio":
            return self.fusion(f_v, f_a)
        return self.fusion(f_a, f_v)

    def forward(self, audio: torch.Tensor, visual: torch.Tensor) -> ForwardOutput:
        if audio.ndim != 2 or audio.shape[1] != self.config.dim_audio:
            raise ValueError(f"audio input must be (batch, {self.config.dim_audio}), got {tuple(audio.shape)}")
        if visual.ndim != 2 or visual.shape[1] != self.config.dim_visual:
            raise ValueError(f"visual input must be (batch, {self.config.dim_visual}), got {tuple(visual.shape)}")
        if audio.shape[0] == 0 or audio.shape[0] != visual.shape[0]:
            raise ValueError("batch must be nonempty and equal across modalities")
        f_a = self.audio_encoder(audio)
        f_v = self.visual_encoder(visual)
        f_av = self.fuse(f_a, f_v)
        return ForwardOutput(f_a, f_v, f_av, self.head_a(f_a), self.head_v(f_v), self.head_av(f_av))

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        return {
            "theta_a": list(self.audio_encoder.parameters()),
            "theta_v": list(self.visual_encoder.parameters()),
            "theta_av": list(self.fusion.parameters()),
            "phi_a": list(self.head_a.parameters()),
            "phi_v": list(self.head_v.parameters()),
            "phi_av": list(self.head_av.parameters()),
        }

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    @torch.no_grad()
    def logits_numpy(self, audio: np.ndarray, visual: np.ndarray,
                     batch_size: int = 1024) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Raw (uncalibrated) logits for every head as float64 arrays."""
        dtype = next(self.parameters()).dtype
        outs: list[list[np.ndarray]] = [[], [], []]
        for s in range(0, len(audio), batch_size):
            out = self(torch.as_tensor(audio[s:s + batch_size], dtype=dtype),
                       torch.as_tensor(visual[s:s + batch_size], dtype=dtype))
            for k, z in enumerate((out.z_a, out.z_v, out.z_av)):
                outs[k].append(z.double().numpy())
        if not outs[0]:
            c = self.config.num_classes
            return np.zeros((0, c)), np.zeros((0, c)), np.zeros((0, c))
        return tuple(np.concatenate(o) for o in outs)  # type: ignore[return-value]


def save_model(model: MultimodalNet, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    save_arrays(directory / "params.bin", directory / "params.json", arrays,
                extra={"config": asdict(model.config)})


def load_model(directory: str | Path) -> MultimodalNet:
    directory = Path(directory)
    arrays, extra = load_arrays(directory / "params.bin", directory / "params.json")
    model = MultimodalNet(ModelConfig(**extra["config"]))
    state = {k: torch.from_numpy(v) for k, v in arrays.items()}
    if state["head_av.weight"].dtype != torch.float32:
        model = model.to(dtype=state["head_av.weight"].dtype)
    model.load_state_dict(state)
    # keep the stored dtype (a cast model holds non-float64 temperatures)
    model.temperatures = state["temperatures"].clone()
    return model


