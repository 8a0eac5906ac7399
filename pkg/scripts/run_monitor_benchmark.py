#!/usr/bin/env python3
"""Run the deterioration-monitoring benchmark and print the score table.

Thin wrapper over ``bootmon monitor-bench``: same flags, same artifacts
(scores.csv, table3.json, per-cell window series CSVs), plus a formatted
aggregate table on stdout. Lower scores mean the monitor tracks the
model's windowed error more closely on out-of-distribution sections.

    python scripts/run_monitor_benchmark.py --data-dir data --out-dir results
    python scripts/run_monitor_benchmark.py --dataset fish_toxicity --stride 10
"""

import json
import sys
from pathlib import Path

from bootmon.cli import EXIT_OK, main


def print_table(out_dir: Path) -> None:
    payload = json.loads((out_dir / "table3.json").read_text())
    agg = payload["aggregates"]
    methods = sorted({m for model in agg.values() for m in model})
    print()
    print("deterioration score, mean +/- std across datasets (lower = better)")
    header = f"{'model':<20}" + "".join(f"{m:>18}" for m in methods)
    print(header)
    for model in sorted(agg):
        cells = []
        for m in methods:
            if m in agg[model]:
                c = agg[model][m]
                cells.append(f"{c['mean']:>8.3f} +/- {c['std']:.2f}")
            else:
                cells.append(f"{'-':>18}")
        print(f"{model:<20}" + "".join(f"{c:>18}" for c in cells))


if __name__ == "__main__":
    argv = sys.argv[1:]
    code = main(["monitor-bench", *argv])
    if code == EXIT_OK:
        out = "results"
        if "--out-dir" in argv:
            out = argv[argv.index("--out-dir") + 1]
        print_table(Path(out))
    sys.exit(code)
