"""Config-driven experiment runs: dataset -> stream -> training -> reports -> artifacts."""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .datagen import DataSplits, SyntheticDatasetSpec, generate_synthetic, load_manifest
from .losses import LossWeights
from .metrics import build_report
from .scenarios import ScenarioSpec, build_stream
from .trainer import ModelOptions, TrainConfig, available_modes, canonical_mode, train_stream

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "MMCL_OUTPUT_DIR"
REPORT_METRICS = ("final_mean_accuracy", "plasticity", "stability", "tradeoff", "recency_gap", "ece")


class ConfigError(ValueError):
    pass


@dataclass
class ManifestSource:
    train: str
    test: str
    num_classes: int
    num_supercategories: int = 1


@dataclass
class ExperimentConfig:
    dataset: SyntheticDatasetSpec | ManifestSource
    scenario: ScenarioSpec
    train: TrainConfig
    inference_modes: list[str] | None = None
    output_dir: str = "runs/default"
    seeds: list[int] = field(default_factory=lambda: [0])
    name: str | None = None
    # keys given explicitly in the config stay fixed across seeds
    fixed_dataset_seed: bool = False
    fixed_scenario_seed: bool = False

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        t = self.train
        return f"{t.method}-{t.modality_mode}-M{t.buffer_capacity if t.uses_buffer else 0}"


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if cls is TrainConfig and key == "weights":
            value = _build(LossWeights, value, f"{path}.weights")
            if isinstance(value.reference_heads, list):
                value = dataclasses.replace(value, reference_heads=tuple(value.reference_heads))
        elif cls is TrainConfig and key == "model":
            value = _build(ModelOptions, value, f"{path}.model")
        kwargs[key] = value
    try:
        obj = cls(**kwargs)
        if hasattr(obj, "validate"):
            obj.validate()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return obj


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    allowed = {"dataset", "scenario", "train", "inference_modes", "output_dir", "seeds", "name"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {', '.join(unknown)}")
    ds_raw = raw.get("dataset", {})
    if isinstance(ds_raw, dict) and "manifest" in ds_raw:
        dataset = _build(ManifestSource, ds_raw["manifest"], "dataset.manifest")
    else:
        dataset = _build(SyntheticDatasetSpec, ds_raw, "dataset")
    scenario = _build(ScenarioSpec, raw.get("scenario", {}), "scenario")
    train = _build(TrainConfig, raw.get("train", {}), "train")
    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds: need a nonempty list of integers")
    modes = raw.get("inference_modes")
    if modes is not None:
        avail = available_modes(train)
        bad = [m for m in modes if m not in avail]
        if bad:
            raise ConfigError(f"inference_modes: {bad} not available for "
                              f"{train.method}/{train.modality_mode} (available: {list(avail)})")
    return ExperimentConfig(
        dataset=dataset, scenario=scenario, train=train, inference_modes=modes,
        output_dir=str(raw.get("output_dir", "runs/default")), seeds=list(seeds),
        name=raw.get("name"),
        fixed_dataset_seed=isinstance(ds_raw, dict) and "seed" in ds_raw,
        fixed_scenario_seed="seed" in raw.get("scenario", {}),
    )


def resolved_dict(cfg: ExperimentConfig) -> dict:
    ds = asdict(cfg.dataset)
    if isinstance(cfg.dataset, ManifestSource):
        ds = {"manifest": ds}
    elif not cfg.fixed_dataset_seed:
        ds.pop("seed")
    sc = asdict(cfg.scenario)
    if not cfg.fixed_scenario_seed:
        sc.pop("seed")
    tr = asdict(cfg.train)
    tr.pop("seed")
    tr["weights"]["reference_heads"] = list(tr["weights"]["reference_heads"])
    out = {"dataset": ds, "scenario": sc, "train": tr,
           "inference_modes": cfg.inference_modes, "output_dir": cfg.output_dir,
           "seeds": cfg.seeds}
    if cfg.name:
        out["name"] = cfg.name
    return out


def load_data(cfg: ExperimentConfig, seed: int) -> DataSplits:
    if isinstance(cfg.dataset, ManifestSource):
        m = cfg.dataset
        train = load_manifest(m.train, m.num_classes, m.num_supercategories)
        test = load_manifest(m.test, m.num_classes, m.num_supercategories,
                             train.dim_audio, train.dim_visual)
        return DataSplits(train, test)
    spec = cfg.dataset
    if not cfg.fixed_dataset_seed:
        spec = dataclasses.replace(spec, seed=seed)
    return generate_synthetic(spec)


def run_seed(cfg: ExperimentConfig, seed: int, log=None) -> dict:
    data = load_data(cfg, seed)
    scenario = cfg.scenario if cfg.fixed_scenario_seed else dataclasses.replace(cfg.scenario, seed=seed)
    stream = build_stream(data, scenario)
    result = train_stream(stream, dataclasses.replace(cfg.train, seed=seed), log=log)
    modes = cfg.inference_modes or list(result.matrices)
    reports = {}
    for m in modes:
        diag = result.record["diagnostics"][m]
        reports[m] = build_report(result.matrices[m], diag["recency_bias"],
                                  math.nan if diag["ece"] is None else diag["ece"])
    return {"result": result, "reports": reports, "modes": modes}


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def _stats(values: list[float]) -> dict:
    arr = np.array([v for v in values if v is not None and math.isfinite(v)], dtype=np.float64)
    if len(arr) == 0:
        return {"mean": None, "std": None, "values": _clean(list(values))}
    std = float(np.std(arr, ddof=1)) if len(arr) > 1 else 0.0
    return {"mean": float(arr.mean()), "std": std, "values": _clean(list(values))}


def aggregate(cfg: ExperimentConfig, per_seed: dict[int, dict]) -> dict:
    modes = next(iter(per_seed.values()))["modes"]
    out_modes = {}
    for m in modes:
        reps = [per_seed[s]["reports"][m] for s in cfg.seeds]
        entry = {k: _stats([getattr(r, k) for r in reps]) for k in REPORT_METRICS}
        curves = np.array([r.mean_accuracy_per_step for r in reps])
        entry["mean_accuracy_per_step"] = {
            "mean": curves.mean(axis=0).tolist(),
            "std": (curves.std(axis=0, ddof=1) if len(reps) > 1 else np.zeros(curves.shape[1])).tolist(),
        }
        out_modes[m] = entry
    headline = canonical_mode(cfg.train)
    if headline not in out_modes:
        headline = modes[0]
    return _clean({
        "schema_version": SCHEMA_VERSION,
        "label": cfg.label,
        "method": cfg.train.method,
        "modality_mode": cfg.train.modality_mode,
        "scenario": cfg.scenario.kind,
        "buffer_capacity": cfg.train.buffer_capacity if cfg.train.uses_buffer else 0,
        "seeds": cfg.seeds,
        "headline_mode": headline,
        "modes": out_modes,
    })


def run_experiment(cfg: ExperimentConfig, output_dir: str | Path | None = None) -> dict:
    """Run every seed, write artifacts into the output directory, return the aggregate."""
    out = Path(output_dir or os.environ.get(OUTPUT_DIR_ENV) or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = resolved_dict(cfg)
    resolved["output_dir"] = str(out)
    (out / "config.resolved.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    per_seed = {}
    for seed in cfg.seeds:
        with open(out / f"run_{seed}.log", "a") as logf:
            def log(rec, _f=logf):
                _f.write(json.dumps(rec, sort_keys=True) + "\n")

            log({"event": "start", "seed": seed, "time": time.time()})
            res = run_seed(cfg, seed, log)
            rec = res["result"].record
            log({"event": "end", "seed": seed, "time": time.time(),
                 "wall_clock_s": rec["wall_clock_s"], "tasks": rec["tasks"],
                 "temperatures": rec["temperatures"], "config": _clean(rec["config"])})
        per_seed[seed] = res
        mats = res["result"].matrices
        headline = canonical_mode(cfg.train)
        if headline not in res["modes"]:
            headline = res["modes"][0]
        (out / f"matrix_{seed}.csv").write_text(mats[headline].to_csv())
        for m in res["modes"]:
            (out / f"matrix_{seed}_{m}.csv").write_text(mats[m].to_csv())
        report = {m: _clean(r.to_dict()) for m, r in res["reports"].items()}
        (out / f"report_{seed}.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    results = aggregate(cfg, per_seed)
    (out / "results.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
    return results


def load_config_file(path: str | Path) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
