"""Figure and grid-sample rendering for the report bundle."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .fda import eval_curve
from .traces import secret_id

__all__ = ["PLOT_GRID_N", "curve_table", "write_curves_csv", "write_curves_svg"]

PLOT_GRID_N = 128


def curve_table(hypertraces, grid_n: int = PLOT_GRID_N):
    """(grid, values) with one row of timing-curve samples per secret."""
    domain = hypertraces[0].timing_curve.domain
    grid = np.linspace(domain[0], domain[1], grid_n + 1)
    values = np.vstack([eval_curve(h.timing_curve, grid) for h in hypertraces])
    return grid, values


def write_curves_csv(hypertraces, clusters, path, grid_n: int = PLOT_GRID_N):
    """Long-format samples: secret, cluster, public value, fitted seconds."""
    grid, values = curve_table(hypertraces, grid_n)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("secret,cluster,y,t\n")
        for idx, h in enumerate(hypertraces):
            sid = secret_id(h.secret)
            cid = int(clusters.assignment[idx])
            for y, t in zip(grid, values[idx]):
                fh.write(f"{sid},{cid},{float(y)!r},{float(t)!r}\n")


def write_curves_svg(hypertraces, clusters, path, grid_n: int = PLOT_GRID_N):
    """All timing curves on one axis, colored by cluster id."""
    grid, values = curve_table(hypertraces, grid_n)
    cmap = plt.get_cmap("tab10" if clusters.k <= 10 else "tab20")
    with plt.rc_context({"svg.hashsalt": "leakscope"}):
        fig, ax = plt.subplots(figsize=(8, 5))
        seen = set()
        for idx in range(len(hypertraces)):
            cid = int(clusters.assignment[idx])
            label = f"cluster {cid}" if cid not in seen else None
            seen.add(cid)
            ax.plot(grid, values[idx], color=cmap(cid % cmap.N), lw=1.0, label=label)
        ax.set_xlabel("public input")
        ax.set_ylabel("time [s]")
        ax.set_title(f"{len(hypertraces)} timing curves in {clusters.k} clusters")
        if clusters.k <= 12:
            ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
