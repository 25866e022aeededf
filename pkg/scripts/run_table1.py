"""Monte Carlo table over several sample sizes: bias, sqrt(n) RMSE and coverage.

    python scripts/run_table1.py --n 500,1000 --reps 200 --workers 4 --out table.csv

Thin wrapper over the ``simulate`` subcommand that also prints an aligned table.
"""

import argparse
import csv
import sys
from pathlib import Path

from confound_bounds.cli import main as cli_main

COLUMNS = [
    ("n", "n"),
    ("bias_pct_psi_l", "bias% lo"),
    ("bias_pct_psi_u", "bias% up"),
    ("bias_pct_eps0", "bias% e0"),
    ("rootn_rmse_psi_l", "rmse lo"),
    ("rootn_rmse_psi_u", "rmse up"),
    ("rootn_rmse_eps0", "rmse e0"),
    ("coverage_pct_region", "cov band"),
    ("coverage_pct_eps0", "cov e0"),
]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", default="500,1000,5000,10000")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--learner", default="logistic-knn")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-dir", default="table1")
    args = p.parse_args()
    code = cli_main(["simulate", "--n", args.n, "--reps", str(args.reps), "--workers", str(args.workers),
                     "--learner", args.learner, "--seed", str(args.seed), "--out-dir", args.out_dir])
    if code:
        return code
    with open(Path(args.out_dir) / "report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    print("  ".join(f"{label:>9}" for _, label in COLUMNS))
    for row in rows:
        print("  ".join(f"{float(row[key]):>9.2f}" if key != "n" else f"{row[key]:>9}" for key, _ in COLUMNS))
    return 0


if __name__ == "__main__":
    sys.exit(main())
