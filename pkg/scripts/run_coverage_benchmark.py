#!/usr/bin/env python3
"""Run the interval-coverage benchmark and print the summary table.

Thin wrapper over ``bootmon coverage-bench``: same flags, same artifacts
(coverage.csv, table2.json), plus a formatted mean +/- std table on
stdout. Typical use:

    python scripts/run_coverage_benchmark.py --data-dir data --out-dir results
    python scripts/run_coverage_benchmark.py --dataset airfoil --bootstraps 50
"""

import json
import sys
from pathlib import Path

from bootmon.cli import EXIT_OK, main


def print_table(out_dir: Path) -> None:
    payload = json.loads((out_dir / "table2.json").read_text())
    agg = payload["aggregates"]
    print()
    print("mean |coverage - alpha| * 100, mean +/- std across datasets")
    print(f"{'model':<20}{'method':<10}{'deviation':>16}")
    for model in sorted(agg):
        for method in sorted(agg[model]):
            cell = agg[model][method]
            print(
                f"{model:<20}{method:<10}"
                f"{cell['mean_abs_dev']:>9.3f} +/- {cell['std_abs_dev']:.3f}"
            )


if __name__ == "__main__":
    argv = sys.argv[1:]
    code = main(["coverage-bench", *argv])
    if code == EXIT_OK:
        out = "results"
        if "--out-dir" in argv:
            out = argv[argv.index("--out-dir") + 1]
        print_table(Path(out))
    sys.exit(code)
