"""Component ablation of SAMM on the desk Seq stream.

Toggles consistency regularization (beta), relational alignment, the unimodal
heads (lambda), the reference-head set, calibration and logit-storage timing,
reporting final mean accuracy over seeds.

    python3 scripts/ablation.py --seeds 0 1 2
"""

import argparse

import numpy as np

from mmcl.experiment import parse_config, run_seed

BASE = {
    "dataset": {"num_classes": 20},
    "scenario": {"kind": "SEQ", "num_tasks": 5, "classes_per_task": 4},
}
VARIANTS = {
    "full": {},
    "no consistency": {"weights": {"beta": 0.0}},
    "no alignment": {"weights": {"alignment": 0.0}},
    "no unimodal heads": {"weights": {"lam": 0.0}},
    "a/v reference only": {"weights": {"reference_heads": ["a", "v"]}},
    "no calibration": {"calibrate": False},
    "first-epoch storage": {"observe_epoch": "first"},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--buffer", type=int, default=200)
    args = ap.parse_args()
    print(f"{'variant':<22}{'MULTI':>16}{'DYNAMIC':>16}")
    for name, over in VARIANTS.items():
        cfg = parse_config({**BASE, "train": {"method": "SAMM", "buffer_capacity": args.buffer, **over},
                            "seeds": args.seeds})
        acc = {"MULTI": [], "DYNAMIC": []}
        for s in args.seeds:
            reports = run_seed(cfg, s)["reports"]
            for m in acc:
                acc[m].append(reports[m].final_mean_accuracy)
        cells = "".join(f"{np.mean(v):>10.2f} ±{np.std(v, ddof=1) if len(v) > 1 else 0:5.2f}"
                        for v in acc.values())
        print(f"{name:<22}{cells}", flush=True)


if __name__ == "__main__":
    main()
