"""Convergence-history figures for the report path.

One figure per accelerator column: relative error reduction per
iteration for every method row of the grid, on a log scale.  Rendering
uses the non-interactive backend so the harness stays headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .bench import ACCELERATOR_TITLES, TableRow

__all__ = ["render_history_figures"]


def render_history_figures(rows: list[TableRow], outdir: str, stem: str) -> list[str]:
    """Write one PNG per accelerator; returns the created paths."""
    os.makedirs(outdir, exist_ok=True)
    by_accel: dict[str, list[TableRow]] = {}
    for row in rows:
        by_accel.setdefault(row.config.accelerator, []).append(row)

    paths = []
    for accel, group in by_accel.items():
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        drawn = 0
        for row in group:
            if len(row.history) < 2:
                continue
            label = row.config.row_label()
            if len({r.config.coarse_mode for r in group}) > 1:
                label += f" [{row.config.coarse_mode}]"
            ax.semilogy(range(len(row.history)), row.history, label=label)
            drawn += 1
        if drawn == 0:
            plt.close(fig)
            continue
        head = group[0].config
        title = ACCELERATOR_TITLES.get(accel, accel)
        ax.set_title(f"{head.problem} {head.method}: {title}")
        ax.set_xlabel("iteration")
        ax.set_ylabel("relative error (A-norm)")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=7, ncol=2)
        path = os.path.join(outdir, f"{stem}_{accel}.png")
        fig.tight_layout()
        fig.savefig(path, dpi=130)
        plt.close(fig)
        paths.append(path)
    return paths
