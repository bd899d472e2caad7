"""Task streams for the three benchmark settings.

* SEQ  - class-incremental: disjoint, seed-shuffled class groups.
* DOM  - domain-incremental: targets are supercategories; each task brings the
  next few subclasses of every supercategory.
* GCIL - generalized class-incremental: per task a random number of classes,
  drawn afresh (classes may reappear), with a fixed sample budget split
  uniformly or along a power-law long tail.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .datagen import DataSplits, PairedDataset

Kind = Literal["SEQ", "DOM", "GCIL"]


@dataclass(frozen=True)
class ScenarioSpec:
    kind: Kind = "SEQ"
    num_tasks: int = 5
    classes_per_task: int = 4
    subclasses_per_task_per_super: int = 2
    gcil_samples_per_task: int = 1000
    gcil_max_classes_per_task: int = 50
    gcil_distribution: Literal["UNIFORM", "LONGTAIL"] = "UNIFORM"
    gcil_power: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in ("SEQ", "DOM", "GCIL"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.num_tasks < 1:
            raise ValueError("num_tasks must be >= 1")
        if self.kind == "SEQ" and self.classes_per_task < 1:
            raise ValueError("classes_per_task must be >= 1")
        if self.kind == "DOM" and self.subclasses_per_task_per_super < 1:
            raise ValueError("subclasses_per_task_per_super must be >= 1")
        if self.kind == "GCIL":
            if self.gcil_samples_per_task < 1 or self.gcil_max_classes_per_task < 1:
                raise ValueError("GCIL sample and class budgets must be >= 1")
            if self.gcil_distribution not in ("UNIFORM", "LONGTAIL"):
                raise ValueError(f"unknown GCIL distribution {self.gcil_distribution!r}")


@dataclass
class Task:
    train: PairedDataset
    test: PairedDataset
    classes: tuple[int, ...]
    train_indices: np.ndarray
    test_indices: np.ndarray


@dataclass
class ScenarioStream:
    tasks: list[Task]
    label_space: tuple[int, ...]
    target_kind: Literal["CLASS_LABEL", "SUPER_LABEL"]
    num_targets: int
    spec: ScenarioSpec
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tasks)

    def task_classes(self) -> list[tuple[int, ...]]:
        return [t.classes for t in self.tasks]


class ScenarioError(ValueError):
    pass


def _make_task(data: DataSplits, t: int, train_idx: np.ndarray, test_idx: np.ndarray,
               classes) -> Task:
    train_idx = np.asarray(train_idx, dtype=np.int64)
    test_idx = np.asarray(test_idx, dtype=np.int64)
    return Task(
        train=data.train.take(train_idx).with_task(t),
        test=data.test.take(test_idx).with_task(t),
        classes=tuple(int(c) for c in classes),
        train_indices=train_idx,
        test_indices=test_idx,
    )


def _indices_of(labels: np.ndarray, classes) -> np.ndarray:
    return np.flatnonzero(np.isin(labels, np.asarray(list(classes), dtype=np.int64)))


def build_seq(data: DataSplits, spec: ScenarioSpec) -> ScenarioStream:
    spec.validate()
    if spec.kind != "SEQ":
        raise ScenarioError("build_seq needs kind=SEQ")
    present = np.unique(data.train.labels)
    need = spec.num_tasks * spec.classes_per_task
    if need > len(present):
        raise ScenarioError(f"{spec.num_tasks} tasks x {spec.classes_per_task} classes "
                            f"needs {need} classes, dataset has {len(present)}")
    order = np.random.default_rng(spec.seed).permutation(present)
    tasks = []
    for t in range(spec.num_tasks):
        cls = np.sort(order[t * spec.classes_per_task:(t + 1) * spec.classes_per_task])
        tasks.append(_make_task(data, t, _indices_of(data.train.labels, cls),
                                _indices_of(data.test.labels, cls), cls))
    label_space = tuple(sorted(int(c) for c in order[:need]))
    return ScenarioStream(tasks, label_space, "CLASS_LABEL", data.train.num_classes, spec)


def build_dom(data: DataSplits, spec: ScenarioSpec) -> ScenarioStream:
    spec.validate()
    if spec.kind != "DOM":
        raise ScenarioError("build_dom needs kind=DOM")
    train = data.train
    rng = np.random.default_rng(spec.seed)
    k = spec.subclasses_per_task_per_super
    supers = np.unique(train.superlabels)
    schedule: dict[int, np.ndarray] = {}
    for s in supers:
        subs = np.unique(train.labels[train.superlabels == s])
        if len(subs) < spec.num_tasks * k:
            raise ScenarioError(f"supercategory {s} has {len(subs)} subclasses, "
                                f"needs {spec.num_tasks * k}")
        schedule[int(s)] = rng.permutation(subs)
    tasks = []
    for t in range(spec.num_tasks):
        cls = np.sort(np.concatenate([order[t * k:(t + 1) * k] for order in schedule.values()]))
        tasks.append(_make_task(data, t, _indices_of(train.labels, cls),
                                _indices_of(data.test.labels, cls), cls))
    return ScenarioStream(tasks, tuple(int(s) for s in supers), "SUPER_LABEL",
                          train.num_supercategories, spec,
                          {"subclass_order": {s: o.tolist() for s, o in schedule.items()}})


def allocate_uniform(n: int, classes) -> dict[int, int]:
    """Equal shares of ``n``; the remainder goes one each to the lowest class ids."""
    classes = sorted(int(c) for c in classes)
    base, rem = divmod(n, len(classes))
    return {c: base + (1 if i < rem else 0) for i, c in enumerate(classes)}


def allocate_longtail(n: int, classes, rank: dict[int, int], power: float) -> dict[int, int]:
    """Shares proportional to ``(rank + 1) ** -power``, largest-remainder rounding."""
    classes = sorted(int(c) for c in classes)
    w = np.array([(rank[c] + 1.0) ** -power for c in classes])
    exact = n * w / w.sum()
    counts = np.floor(exact).astype(np.int64)
    short = n - int(counts.sum())
    # stable sort keeps lowest class id first among equal remainders
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:short]] += 1
    return {c: int(k) for c, k in zip(classes, counts)}


def build_gcil(data: DataSplits, spec: ScenarioSpec) -> ScenarioStream:
    spec.validate()
    if spec.kind != "GCIL":
        raise ScenarioError("build_gcil needs kind=GCIL")
    train = data.train
    if len(train) == 0:
        raise ScenarioError("empty dataset")
    rng = np.random.default_rng(spec.seed)
    present = np.unique(train.labels)
    kmax = min(spec.gcil_max_classes_per_task, len(present))
    ranking = rng.permutation(present)
    rank = {int(c): i for i, c in enumerate(ranking)}
    pools = {int(c): np.flatnonzero(train.labels == c) for c in present}
    tasks, resampled = [], []
    for t in range(spec.num_tasks):
        k = int(rng.integers(1, kmax + 1))
        chosen = rng.choice(present, size=k, replace=False)
        if spec.gcil_distribution == "UNIFORM":
            alloc = allocate_uniform(spec.gcil_samples_per_task, chosen)
        else:
            alloc = allocate_longtail(spec.gcil_samples_per_task, chosen, rank, spec.gcil_power)
        idx = []
        for c in sorted(alloc):
            m = alloc[c]
            if m == 0:
                continue
            pool = pools[c]
            if m <= len(pool):
                idx.append(rng.choice(pool, size=m, replace=False))
            else:
                extra = rng.choice(pool, size=m - len(pool), replace=True)
                idx.append(np.concatenate([rng.permutation(pool), extra]))
                resampled.append([t, c])
        cls = sorted(c for c, m in alloc.items() if m > 0)
        tasks.append(_make_task(data, t, np.concatenate(idx),
                                _indices_of(data.test.labels, cls), cls))
    return ScenarioStream(tasks, tuple(int(c) for c in present), "CLASS_LABEL",
                          train.num_classes, spec, {"resampled_with_replacement": resampled})


def build_stream(data: DataSplits, spec: ScenarioSpec) -> ScenarioStream:
    return {"SEQ": build_seq, "DOM": build_dom, "GCIL": build_gcil}[spec.kind](data, spec)


def stream_to_manifest(stream: ScenarioStream) -> dict:
    return {
        "spec": asdict(stream.spec),
        "target_kind": stream.target_kind,
        "tasks": [
            {"classes": list(t.classes),
             "train_indices": t.train_indices.tolist(),
             "test_indices": t.test_indices.tolist()}
            for t in stream.tasks
        ],
    }


def save_stream_manifest(stream: ScenarioStream, path: str | Path) -> None:
    Path(path).write_text(json.dumps(stream_to_manifest(stream), sort_keys=True))


def stream_from_manifest(data: DataSplits, manifest: dict) -> ScenarioStream:
    """Rebuild a stream exactly from the recorded sample indices."""
    spec = ScenarioSpec(**manifest["spec"])
    kind = manifest["target_kind"]
    tasks = [_make_task(data, t, rec["train_indices"], rec["test_indices"], rec["classes"])
             for t, rec in enumerate(manifest["tasks"])]
    if kind == "SUPER_LABEL":
        space = tuple(int(s) for s in np.unique(data.train.superlabels))
        n_targets = data.train.num_supercategories
    else:
        space = tuple(sorted({c for t in tasks for c in t.classes}))
        n_targets = data.train.num_classes
    return ScenarioStream(tasks, space, kind, n_targets, spec)
