"""Desk-scale class-incremental comparison: SAMM vs ER (multimodal and unimodal), JOINT, SGD.

Writes one run directory per method under --out and prints the comparison table.

    python3 scripts/desk_seq_trend.py --out runs/trend
"""

import argparse
import json
from pathlib import Path

from mmcl.cli import comparison_rows, format_table, to_csv
from mmcl.experiment import parse_config, run_experiment

BASE = {
    "dataset": {"num_classes": 20, "samples_per_class_train": 50, "samples_per_class_test": 20},
    "scenario": {"kind": "SEQ", "num_tasks": 5, "classes_per_task": 4},
}
METHODS = {
    "JOINT": {"method": "JOINT", "buffer_capacity": 0},
    "SGD": {"method": "SGD", "buffer_capacity": 0},
    "ER-audio": {"method": "ER", "modality_mode": "AUDIO_ONLY"},
    "ER-visual": {"method": "ER", "modality_mode": "VISUAL_ONLY"},
    "ER": {"method": "ER"},
    "SAMM": {"method": "SAMM"},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/trend")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--buffer", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=10)
    args = ap.parse_args()

    results = []
    for name, train in METHODS.items():
        train = {"buffer_capacity": args.buffer, "epochs_per_task": args.epochs, **train}
        cfg = parse_config({**BASE, "train": train, "seeds": args.seeds, "name": name})
        results.append(run_experiment(cfg, Path(args.out) / name))
        print(f"done {name}", flush=True)
    header, rows = comparison_rows(results)
    print(format_table(header, rows))
    (Path(args.out) / "comparison.csv").write_text(to_csv(header, rows))
    summary = {r["label"]: {k: r["modes"][r["headline_mode"]][k]["mean"]
                            for k in ("final_mean_accuracy", "tradeoff", "recency_gap")}
               for r in results}
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
