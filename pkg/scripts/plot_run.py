#!/usr/bin/env python3
"""Plot the time series of a finished run bundle (metrics.csv) to a PNG.

Requires matplotlib, which is not a package dependency:

    pip install matplotlib
    python scripts/plot_run.py runs/steady --out steady.png
"""

import argparse
import os
import sys

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib is required: pip install matplotlib")

from cascadesim.report import read_metrics_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run_dir", help="directory holding metrics.csv")
    ap.add_argument("--out", default=None, help="output PNG (default <run_dir>/run.png)")
    args = ap.parse_args()

    rows = read_metrics_csv(os.path.join(args.run_dir, "metrics.csv"))
    if not rows:
        sys.exit("metrics.csv is empty")
    t = [r["bucket_start_s"] for r in rows]

    fig, axes = plt.subplots(4, 1, figsize=(10, 11), sharex=True)
    axes[0].plot(t, [r["demand_qps"] for r in rows], label="demand qps")
    axes[0].plot(t, [r["finalized"] / 10.0 for r in rows], label="finalized qps", alpha=0.7)
    axes[0].set_ylabel("qps")
    axes[0].legend()

    axes[1].plot(t, [r["slo_violation_ratio"] for r in rows], color="tab:red")
    axes[1].set_ylabel("violation ratio")
    axes[1].set_ylim(bottom=0)

    axes[2].plot(t, [r["heavy_route_ratio"] for r in rows], color="tab:purple")
    axes[2].set_ylabel("heavy route ratio")
    axes[2].set_ylim(0, 1.05)

    axes[3].plot(t, [r["light_workers"] for r in rows], label="light workers")
    axes[3].plot(t, [r["heavy_workers"] for r in rows], label="heavy workers")
    axes[3].set_ylabel("workers")
    axes[3].set_xlabel("time (s)")
    axes[3].legend()

    out = args.out or os.path.join(args.run_dir, "run.png")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
