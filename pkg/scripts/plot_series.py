"""Plot a series.csv (or a sweep's per-value series files) written by ``otocqsl run``/``sweep``.

    python3 scripts/plot_series.py out/series.csv -o fig.png
    python3 scripts/plot_series.py out/series_N_*.csv --rates
"""
import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

CURVES = [
    ("otoc_exact", "exact", "k", "-"),
    ("otoc_redfield", "Redfield", "C0", "--"),
    ("bound_liouville", "Liouville bound", "C1", "-"),
    ("bound_state_direct", "state bound", "C2", "-"),
    ("bound_state_relaxed", "relaxed state bound", "C2", ":"),
]
RATES = [("rate_exact", "exact", "k"), ("rate_liouville", "Liouville", "C1"), ("rate_state", "state", "C2")]


def load(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv", nargs="+")
    ap.add_argument("-o", "--output", default="series.png")
    ap.add_argument("--rates", action="store_true", help="plot |ln| rate curves instead")
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(6, 4))
    for i, path in enumerate(args.csv):
        data = load(path)
        tag = "" if len(args.csv) == 1 else f" ({path.rsplit('/', 1)[-1]})"
        if args.rates:
            for key, label, color in RATES:
                ax.plot(data["Jt"], data[key], color=color, alpha=1 - 0.2 * i, label=label + tag)
            ax.set_ylabel("rate")
        else:
            for key, label, color, style in CURVES:
                ax.plot(data["Jt"], data[key], color=color, ls=style, alpha=1 - 0.2 * i, label=label + tag)
            ax.plot(data["Jt"], data["threshold"], color="0.6", ls="--", lw=0.8)
            ax.set_ylim(0, 1.02)
            ax.set_ylabel("averaged OTOC")
    ax.set_xlabel("Jt")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)
    print(args.output)


if __name__ == "__main__":
    main()
