"""Write one draw of the binary-confounder simulation design as a CSV for ``analyze``.

    python scripts/make_example_csv.py --n 5000 --seed 0 --out sim.csv
"""

import argparse
import csv

from confound_bounds.core import STREAM_SIMULATION, make_rng
from confound_bounds.simulation import DgpConfig, generate


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--r", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="sim.csv")
    args = p.parse_args()
    data, _ = generate(DgpConfig(args.r, args.n, args.seed), make_rng(args.seed, STREAM_SIMULATION, 0))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "a", "y"])
        for (x1, x2), a, y in zip(data.covariates, data.treatment, data.outcome):
            w.writerow(["%.17g" % x1, "%.17g" % x2, int(a), int(y)])
    print(f"wrote {args.n} rows to {args.out}")


if __name__ == "__main__":
    main()
