"""Accuracy-distribution figures written next to the report CSVs."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import DistributionSummary  # noqa: E402

RC = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "encounterpred",
}

LINESTYLES = {1: "-", 2: "--", 3: ":"}


def _step_xy(s: DistributionSummary):
    xs = [0.0]
    ys = [0.0]
    for a, q in zip(s.accuracies, s.ecdf):
        xs += [a, a]
        ys += [ys[-1], q]
    xs.append(1.0)
    ys.append(1.0)
    return xs, ys


def plot_accuracy_cdfs(summaries: Iterable[DistributionSummary], outdir, fmt: str = "png") -> list[Path]:
    """One figure per task: ECDF of per-user accuracy, a curve per (variant, k)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    by_task = defaultdict(list)
    for s in summaries:
        by_task[s.task].append(s)
    paths = []
    with plt.rc_context(RC):
        for task in sorted(by_task):
            fig, ax = plt.subplots(figsize=(5.0, 3.4))
            variants = sorted({s.variant for s in by_task[task]})
            colors = {v: f"C{i}" for i, v in enumerate(variants)}
            for s in sorted(by_task[task], key=lambda s: (s.variant, s.k)):
                xs, ys = _step_xy(s)
                ax.plot(xs, ys, color=colors[s.variant], linestyle=LINESTYLES.get(s.k, "-."),
                        label=f"{s.variant} k={s.k}")
            ax.set_xlim(0, 1)
            ax.set_ylim(0, 1.02)
            ax.set_xlabel("per-user accuracy")
            ax.set_ylabel("fraction of users (CDF)")
            ax.set_title(f"{task} prediction accuracy")
            ax.legend(loc="upper left", frameon=False)
            fig.tight_layout()
            path = outdir / f"accuracy_cdf_{task}.{fmt}"
            fig.savefig(path, metadata={"Software": None} if fmt == "png" else None)
            plt.close(fig)
            paths.append(path)
    return paths
