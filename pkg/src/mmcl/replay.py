"""Reservoir-sampled episodic memory holding inputs, labels and frozen logits."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .blobio import load_arrays, save_arrays


@dataclass(frozen=True)
class BufferEntry:
    audio: np.ndarray
    visual: np.ndarray
    label: int
    z_a: np.ndarray
    z_v: np.ndarray
    z_av: np.ndarray

    def __post_init__(self):
        # stored teacher logits must never change after insertion
        for name in ("audio", "visual", "z_a", "z_v", "z_av"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass
class BufferBatch:
    audio: np.ndarray
    visual: np.ndarray
    labels: np.ndarray
    z_a: np.ndarray
    z_v: np.ndarray
    z_av: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def empty(cls) -> "BufferBatch":
        z = np.zeros((0, 0))
        return cls(z, z, np.zeros(0, dtype=np.int64), z, z, z)


class ReservoirBuffer:
    """Fixed-capacity reservoir (Vitter's Algorithm R).

    Items are usually :class:`BufferEntry`, but any object can be stored; only
    :meth:`sample` and checkpointing assume entries.
    """

    def __init__(self, capacity: int, seed: int | np.random.Generator = 0):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = int(capacity)
        self.entries: list[Any] = []
        self.seen = 0
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self.entries)

    def observe(self, item: Any) -> None:
        self.seen += 1
        if self.capacity == 0:
            return
        if self.seen <= self.capacity:
            self.entries.append(item)
            return
        j = int(self.rng.integers(0, self.seen))
        if j < self.capacity:
            self.entries[j] = item

    def sample_items(self, k: int, rng: np.random.Generator | None = None) -> list[Any]:
        if not self.entries or k <= 0:
            return []
        rng = rng or self.rng
        n = len(self.entries)
        idx = rng.integers(0, n, size=k) if k > n else rng.permutation(n)[:k]
        return [self.entries[i] for i in idx]

    def sample(self, k: int, rng: np.random.Generator | None = None) -> BufferBatch:
        """Stacked batch of ``k`` entries; an empty batch when the buffer is empty."""
        return _stack(self.sample_items(k, rng))

    def all(self) -> BufferBatch:
        return _stack(self.entries)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        b = self.all()
        arrays = {"audio": b.audio, "visual": b.visual, "labels": b.labels,
                  "z_a": b.z_a, "z_v": b.z_v, "z_av": b.z_av}
        extra = {"capacity": self.capacity, "seen": self.seen,
                 "rng_state": self.rng.bit_generator.state}
        save_arrays(directory / "buffer.bin", directory / "buffer.json", arrays, extra)

    @classmethod
    def load(cls, directory: str | Path) -> "ReservoirBuffer":
        directory = Path(directory)
        arrays, extra = load_arrays(directory / "buffer.bin", directory / "buffer.json")
        buf = cls(extra["capacity"])
        buf.seen = extra["seen"]
        buf.rng.bit_generator.state = extra["rng_state"]
        for i in range(len(arrays["labels"])):
            buf.entries.append(BufferEntry(arrays["audio"][i], arrays["visual"][i],
                                           int(arrays["labels"][i]), arrays["z_a"][i],
                                           arrays["z_v"][i], arrays["z_av"][i]))
        return buf


def _stack(items: list[BufferEntry]) -> BufferBatch:
    if not items:
        return BufferBatch.empty()
    return BufferBatch(
        audio=np.stack([e.audio for e in items]),
        visual=np.stack([e.visual for e in items]),
        labels=np.array([e.label for e in items], dtype=np.int64),
        z_a=np.stack([e.z_a for e in items]),
        z_v=np.stack([e.z_v for e in items]),
        z_av=np.stack([e.z_av for e in items]),
    )
