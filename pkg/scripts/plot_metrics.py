#!/usr/bin/env python3
"""Plot metrics.csv from a scenario run: errors, inputs and safety margins.

Usage: python scripts/plot_metrics.py <run_dir> [out.png]
"""

import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def load_metrics(path):
    with open(path) as f:
        reader = csv.DictReader(f)
        rows = list(reader)
    cols = {}
    for key in rows[0]:
        try:
            cols[key] = np.array([float(r[key]) for r in rows])
        except ValueError:
            cols[key] = np.array([r[key] for r in rows])
    return cols


def main():
    run_dir = Path(sys.argv[1])
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else run_dir / "metrics.png"
    m = load_metrics(run_dir / "metrics.csv")
    t = m["t"]

    fig, axes = plt.subplots(3, 1, figsize=(9, 9), sharex=True)
    axes[0].plot(t, m["e_ee_real"], label="e_ee_real", lw=0.8)
    axes[0].plot(t, m["e_ee_nom"], label="e_ee_nominal", lw=0.8)
    axes[0].plot(t, m["e_body_local"], label="e_body_local", lw=0.8)
    axes[0].set_ylabel("error [mm]")
    axes[0].legend(loc="upper right")

    axes[1].plot(t, m["u_nom_norm"], label="|u| controller", lw=0.8)
    axes[1].plot(t, m["u_loc_norm"], label="|u| local", lw=0.8)
    axes[1].set_ylabel("input norm [mm/s]")
    axes[1].legend(loc="upper right")

    margin = m["margin_real_min"]
    if np.all(np.isfinite(margin)):
        axes[2].plot(t, margin, label="min margin real", lw=0.8)
        axes[2].plot(t, m["margin_nom_min"], label="min margin nominal", lw=0.8)
        axes[2].axhline(0.0, color="k", lw=0.5)
        axes[2].set_ylabel("d - c_d [mm]")
        axes[2].legend(loc="upper right")
    else:
        axes[2].text(0.5, 0.5, "no safe zone in this run", ha="center", va="center")
    axes[2].set_xlabel("time [s]")

    fig.tight_layout()
    fig.savefig(out, dpi=140)
    print(out)


if __name__ == "__main__":
    main()
