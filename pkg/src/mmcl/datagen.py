"""Synthetic paired-modality data and the precomputed-feature manifest adapter.

Each class owns a latent prototype. The audio and visual views are two
different orthonormal linear embeddings of a per-modality latent that mixes a
prototype shared across modalities with a modality-private one, plus
independent Gaussian noise. A per-task additive offset (resampled per task,
independent per modality) models domain shift at task boundaries.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PairedExample:
    audio: np.ndarray
    visual: np.ndarray
    label: int
    superlabel: int
    task_id: int = 0


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    num_classes: int = 20
    samples_per_class_train: int = 50
    samples_per_class_test: int = 20
    dim_audio: int = 32
    dim_visual: int = 32
    latent_dim: int = 16
    num_supercategories: int = 5
    prototype_scale: float = 0.5
    noise_std_a: float = 0.6
    noise_std_v: float = 0.6
    shift_std_a: float = 0.0
    shift_std_v: float = 0.0
    cross_modal_informativeness: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        for name in ("num_classes", "samples_per_class_train", "samples_per_class_test",
                     "dim_audio", "dim_visual", "latent_dim", "num_supercategories"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("prototype_scale", "noise_std_a", "noise_std_v",
                     "shift_std_a", "shift_std_v", "cross_modal_informativeness"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.cross_modal_informativeness > 1:
            raise ValueError("cross_modal_informativeness must lie in [0, 1]")
        if self.latent_dim > min(self.dim_audio, self.dim_visual):
            raise ValueError("latent_dim must not exceed dim_audio or dim_visual")
        if self.num_supercategories > self.num_classes:
            raise ValueError("num_supercategories must not exceed num_classes")


def _as_rows(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x if x.ndim == 2 else x.reshape(n, -1)


@dataclass
class PairedDataset:
    """Column-oriented collection of paired examples.

    ``shift`` optionally holds ``(seed, shift_std_a, shift_std_v)``; when set,
    :meth:`with_task` adds the task's domain offset to both views.
    """

    audio: np.ndarray
    visual: np.ndarray
    labels: np.ndarray
    superlabels: np.ndarray
    task_ids: np.ndarray
    num_classes: int
    num_supercategories: int
    shift: tuple[int, float, float] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        n = len(self.labels)
        self.audio = _as_rows(self.audio, n)
        self.visual = _as_rows(self.visual, n)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.superlabels = np.asarray(self.superlabels, dtype=np.int64)
        self.task_ids = np.asarray(self.task_ids, dtype=np.int64)
        if not (len(self.audio) == len(self.visual) == len(self.superlabels) == len(self.task_ids) == n):
            raise ValueError("column lengths disagree")
        if n:
            if not (np.isfinite(self.audio).all() and np.isfinite(self.visual).all()):
                raise ValueError("non-finite feature values")
            if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
                raise ValueError("label out of range")
            if self.superlabels.min() < 0 or self.superlabels.max() >= self.num_supercategories:
                raise ValueError("superlabel out of range")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> PairedExample:
        return PairedExample(self.audio[i], self.visual[i], int(self.labels[i]),
                             int(self.superlabels[i]), int(self.task_ids[i]))

    @property
    def dim_audio(self) -> int:
        return self.audio.shape[1]

    @property
    def dim_visual(self) -> int:
        return self.visual.shape[1]

    def take(self, idx: Sequence[int] | np.ndarray) -> "PairedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, audio=self.audio[idx], visual=self.visual[idx],
                       labels=self.labels[idx], superlabels=self.superlabels[idx],
                       task_ids=self.task_ids[idx])

    def with_task(self, task_id: int) -> "PairedDataset":
        audio, visual = self.audio, self.visual
        if self.shift is not None:
            off_a, off_v = task_shift(self.shift, task_id, self.dim_audio, self.dim_visual)
            audio = audio + off_a
            visual = visual + off_v
        return replace(self, audio=audio, visual=visual,
                       task_ids=np.full(len(self), task_id, dtype=np.int64))

    def targets(self, kind: str) -> np.ndarray:
        return self.superlabels if kind == "SUPER_LABEL" else self.labels

    @classmethod
    def concat(cls, parts: Sequence["PairedDataset"]) -> "PairedDataset":
        first = parts[0]
        return replace(
            first,
            audio=np.concatenate([p.audio for p in parts]),
            visual=np.concatenate([p.visual for p in parts]),
            labels=np.concatenate([p.labels for p in parts]),
            superlabels=np.concatenate([p.superlabels for p in parts]),
            task_ids=np.concatenate([p.task_ids for p in parts]),
        )

    @classmethod
    def from_examples(cls, examples: Sequence[PairedExample], num_classes: int,
                      num_supercategories: int, dim_audio: int | None = None,
                      dim_visual: int | None = None) -> "PairedDataset":
        n = len(examples)
        da = dim_audio if dim_audio is not None else (len(examples[0].audio) if n else 0)
        dv = dim_visual if dim_visual is not None else (len(examples[0].visual) if n else 0)
        return cls(
            audio=np.array([e.audio for e in examples], dtype=np.float64).reshape(n, da),
            visual=np.array([e.visual for e in examples], dtype=np.float64).reshape(n, dv),
            labels=np.array([e.label for e in examples], dtype=np.int64),
            superlabels=np.array([e.superlabel for e in examples], dtype=np.int64),
            task_ids=np.array([e.task_id for e in examples], dtype=np.int64),
            num_classes=num_classes,
            num_supercategories=num_supercategories,
        )


@dataclass
class DataSplits:
    train: PairedDataset
    test: PairedDataset


def superlabel_of(label: np.ndarray | int, num_classes: int, num_supercategories: int):
    """Contiguous class blocks: class c belongs to supercategory floor(c * S / C)."""
    return np.asarray(label) * num_supercategories // num_classes


def _orthonormal_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diag(r))


def task_shift(shift: tuple[int, float, float], task_id: int, dim_audio: int,
               dim_visual: int) -> tuple[np.ndarray, np.ndarray]:
    seed, std_a, std_v = shift
    # separate streams so changing one modality's magnitude leaves the other untouched
    rng_a = np.random.default_rng([int(seed), 0xA0D10, int(task_id)])
    rng_v = np.random.default_rng([int(seed), 0x51D0, int(task_id)])
    return (std_a * rng_a.standard_normal(dim_audio),
            std_v * rng_v.standard_normal(dim_visual))


def generate_synthetic(spec: SyntheticDatasetSpec) -> DataSplits:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    c, L = spec.num_classes, spec.latent_dim
    shared = spec.prototype_scale * rng.standard_normal((c, L))
    private_a = spec.prototype_scale * rng.standard_normal((c, L))
    private_v = spec.prototype_scale * rng.standard_normal((c, L))
    rho = spec.cross_modal_informativeness
    latent_a = math.sqrt(rho) * shared + math.sqrt(1 - rho) * private_a
    latent_v = math.sqrt(rho) * shared + math.sqrt(1 - rho) * private_v
    map_a = _orthonormal_columns(rng, spec.dim_audio, L)
    map_v = _orthonormal_columns(rng, spec.dim_visual, L)
    proto_a = latent_a @ map_a.T
    proto_v = latent_v @ map_v.T

    def split(per_class: int) -> PairedDataset:
        labels = np.repeat(np.arange(c), per_class)
        n = len(labels)
        audio = proto_a[labels] + spec.noise_std_a * rng.standard_normal((n, spec.dim_audio))
        visual = proto_v[labels] + spec.noise_std_v * rng.standard_normal((n, spec.dim_visual))
        return PairedDataset(
            audio=audio, visual=visual, labels=labels,
            superlabels=superlabel_of(labels, c, spec.num_supercategories),
            task_ids=np.zeros(n, dtype=np.int64),
            num_classes=c, num_supercategories=spec.num_supercategories,
            shift=(spec.seed, spec.shift_std_a, spec.shift_std_v),
        )

    train = split(spec.samples_per_class_train)
    test = split(spec.samples_per_class_test)
    return DataSplits(train, test)


# --------------------------------------------------------------------------
# manifest adapter


class ManifestError(ValueError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"manifest row {row}: {message}")


class MissingFeatureFileError(ManifestError):
    pass


class DimensionMismatchError(ManifestError):
    pass


class LabelOutOfRangeError(ManifestError):
    pass


_HEADER = struct.Struct("<ii")


def write_feature_file(path: str | Path, vector: np.ndarray) -> None:
    vec = np.asarray(vector, dtype="<f4").reshape(1, -1)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(vec.shape[0], vec.shape[1]))
        fh.write(vec.tobytes())


def read_feature_file(path: str | Path) -> np.ndarray:
    """Returns a (count, dim) float32 array."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    count, dim = _HEADER.unpack_from(raw)
    body = raw[_HEADER.size:]
    if count < 0 or dim < 0 or len(body) != 4 * count * dim:
        raise ValueError(f"{path}: payload size does not match header ({count}x{dim})")
    return np.frombuffer(body, dtype="<f4").reshape(count, dim).astype(np.float32)


def write_manifest(path: str | Path, records: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_manifest(path: str | Path, num_classes: int, num_supercategories: int = 1,
                  dim_audio: int | None = None, dim_visual: int | None = None) -> PairedDataset:
    """Load a JSON-lines manifest of ``{audio_path, visual_path, label, superlabel}``.

    Relative feature paths resolve against the manifest's directory. When the
    dimensions are not given, the first record fixes them.
    """
    path = Path(path)
    base = path.parent
    examples: list[PairedExample] = []
    rows = [ln for ln in path.read_text().splitlines() if ln.strip()]
    for row, line in enumerate(rows):
        try:
            rec = json.loads(line)
            label = int(rec["label"])
            superlabel = int(rec.get("superlabel", 0))
            feats = {}
            for key in ("audio_path", "visual_path"):
                fpath = Path(rec[key])
                if not fpath.is_absolute():
                    fpath = base / fpath
                if not fpath.is_file():
                    raise MissingFeatureFileError(row, f"feature file not found: {fpath}")
                arr = read_feature_file(fpath)
                if arr.shape[0] != 1:
                    raise DimensionMismatchError(row, f"{fpath} holds {arr.shape[0]} vectors, expected 1")
                feats[key] = arr[0].astype(np.float64)
        except ManifestError:
            raise
        except (KeyError, TypeError, json.JSONDecodeError, ValueError) as exc:
            raise ManifestError(row, f"malformed record ({exc})") from exc
        if dim_audio is None:
            dim_audio = len(feats["audio_path"])
        if dim_visual is None:
            dim_visual = len(feats["visual_path"])
        if len(feats["audio_path"]) != dim_audio:
            raise DimensionMismatchError(row, f"audio dim {len(feats['audio_path'])} != {dim_audio}")
        if len(feats["visual_path"]) != dim_visual:
            raise DimensionMismatchError(row, f"visual dim {len(feats['visual_path'])} != {dim_visual}")
        if not 0 <= label < num_classes:
            raise LabelOutOfRangeError(row, f"label {label} outside [0, {num_classes})")
        if not 0 <= superlabel < num_supercategories:
            raise LabelOutOfRangeError(row, f"superlabel {superlabel} outside [0, {num_supercategories})")
        if not (np.isfinite(feats["audio_path"]).all() and np.isfinite(feats["visual_path"]).all()):
            raise ManifestError(row, "non-finite feature values")
        examples.append(PairedExample(feats["audio_path"], feats["visual_path"], label, superlabel))
    return PairedDataset.from_examples(examples, num_classes, num_supercategories,
                                       dim_audio or 0, dim_visual or 0)
