"""Plot bound curves and bands from an ``analyze`` output directory (needs matplotlib).

    python scripts/plot_curves.py out/curves.csv --delta 1 --out curves.png
"""

import argparse
import csv
from collections import defaultdict


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("curves")
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--out", default="curves.png")
    args = p.parse_args()
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise SystemExit("plotting needs matplotlib: pip install matplotlib") from exc

    series = defaultdict(lambda: defaultdict(list))
    with open(args.curves, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if abs(float(row["delta"]) - args.delta) > 1e-12:
                continue
            for key, value in row.items():
                if key not in ("model", "delta"):
                    series[row["model"]][key].append(float(value))

    fig, axes = plt.subplots(1, len(series), figsize=(5 * len(series), 4), squeeze=False)
    for ax, (model, s) in zip(axes[0], sorted(series.items())):
        ax.fill_between(s["eps"], s["uniform_lower"], s["uniform_upper"], color="0.85", label="uniform band")
        ax.plot(s["eps"], s["pointwise_lower"], ":", color="0.3", label="pointwise band")
        ax.plot(s["eps"], s["pointwise_upper"], ":", color="0.3")
        ax.plot(s["eps"], s["psi_l"], color="C0", label="lower bound")
        ax.plot(s["eps"], s["psi_u"], color="C3", label="upper bound")
        ax.axhline(0, color="k", lw=0.6)
        ax.set_xlabel("proportion of confounded units")
        ax.set_ylabel("average treatment effect")
        ax.set_title(f"{model} model, delta = {args.delta:g}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
