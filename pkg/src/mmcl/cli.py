"""Command-line entry point: ``mmcl run | compare | plot``.

Exit codes: 0 ok, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .experiment import (OUTPUT_DIR_ENV, SCHEMA_VERSION, ConfigError, load_config_file,
                         parse_config, run_experiment)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
MODE_ORDER = ("AUDIO", "VISUAL", "MULTI", "DYNAMIC")


def _apply_override(raw: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    node = raw
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {p} is not a mapping")
    node[parts[-1]] = parsed


def cmd_run(args) -> int:
    try:
        raw = load_config_file(args.config)
        for s in args.set or []:
            _apply_override(raw, s)
        if args.seed:
            raw["seeds"] = list(raw.get("seeds", [])) + list(args.seed)
        cfg = parse_config(raw)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        results = run_experiment(cfg, args.output_dir)
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    head = results["modes"][results["headline_mode"]]["final_mean_accuracy"]
    print(f"{results['label']}: {results['headline_mode']} final mean accuracy "
          f"{head['mean']:.2f} +- {head['std']:.2f} over seeds {results['seeds']}")
    return EXIT_OK


def comparison_rows(results: list[dict]) -> tuple[list[str], list[list]]:
    """Rows in input order; delta = headline accuracy minus the first row's."""
    versions = {r.get("schema_version") for r in results}
    if versions != {SCHEMA_VERSION}:
        raise ConfigError(f"results schema mismatch: found versions {sorted(map(str, versions))}, "
                          f"expected {SCHEMA_VERSION}")
    modes = [m for m in MODE_ORDER if any(m in r["modes"] for r in results)]
    header = ["label"]
    for m in modes:
        header += [f"{m}_mean", f"{m}_std"]
    header += ["headline_mode", "headline_mean", "headline_std", "delta_vs_first"]
    base = results[0]["modes"][results[0]["headline_mode"]]["final_mean_accuracy"]["mean"]
    rows = []
    for r in results:
        row: list = [r["label"]]
        for m in modes:
            acc = r["modes"].get(m, {}).get("final_mean_accuracy")
            row += [acc["mean"], acc["std"]] if acc else [None, None]
        h = r["modes"][r["headline_mode"]]["final_mean_accuracy"]
        row += [r["headline_mode"], h["mean"], h["std"], h["mean"] - base]
        rows.append(row)
    return header, rows


def format_table(header: list[str], rows: list[list]) -> str:
    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.2f}"
        return str(v)

    # mean/std pairs render as one "mean +- std" column
    cols, names = [], []
    i = 0
    while i < len(header):
        h = header[i]
        if h.endswith("_mean") and i + 1 < len(header) and header[i + 1].endswith("_std"):
            names.append(h[:-5])
            cols.append([("-" if r[i] is None else f"{r[i]:.2f} +- {r[i + 1]:.2f}") for r in rows])
            i += 2
        else:
            names.append(h)
            cols.append([cell(r[i]) for r in rows])
            i += 1
    widths = [max(len(n), *(len(c) for c in col)) for n, col in zip(names, cols)]
    lines = ["  ".join(n.ljust(w) for n, w in zip(names, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for k in range(len(rows)):
        lines.append("  ".join(col[k].ljust(w) for col, w in zip(cols, widths)))
    return "\n".join(lines)


def to_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    return buf.getvalue()


def cmd_compare(args) -> int:
    try:
        results = [json.loads(Path(p).read_text()) for p in args.results]
        header, rows = comparison_rows(results)
    except (OSError, json.JSONDecodeError, KeyError, ConfigError) as exc:
        print(f"compare error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(format_table(header, rows))
    if args.csv:
        Path(args.csv).write_text(to_csv(header, rows))
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_run

    try:
        written = plot_run(Path(args.run_dir), Path(args.out) if args.out else None)
    except (OSError, ValueError, KeyError) as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in written:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmcl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--output-dir", help=f"overrides config output_dir and ${OUTPUT_DIR_ENV}")
    run.add_argument("--seed", type=int, action="append", help="append a seed (repeatable)")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config field, e.g. train.epochs_per_task=5")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="tabulate several results.json files")
    cmp_.add_argument("results", nargs="+")
    cmp_.add_argument("--csv", help="also write the table as CSV")
    cmp_.set_defaults(func=cmd_compare)

    plot = sub.add_parser("plot", help="render task matrices and accuracy curves of a run")
    plot.add_argument("run_dir")
    plot.add_argument("--out", help="image directory (default: the run directory)")
    plot.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
