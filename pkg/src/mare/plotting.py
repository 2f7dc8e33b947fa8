"""Figures for corpus statistics and evaluation reports (PNG via Agg)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from mare.corpus import CorpusStats  # noqa: E402
from mare.evalkit import STRATEGY_ORDER, MetricsReport  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "svg.hashsalt": "mare",
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata keeps the files reproducible
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def attribute_count_boxplot(stats: CorpusStats, path: str | Path) -> Path:
    """Distribution of attributes per relation, one box per label."""
    labels = sorted(stats.attribute_count_distribution)
    data = []
    for label in labels:
        hist = stats.attribute_count_distribution[label]
        data.append(np.repeat(sorted(hist), [hist[k] for k in sorted(hist)]))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(labels) + 2), 3.2))
        if data:
            ax.boxplot(data, showfliers=True)
            ax.set_xticks(range(1, len(labels) + 1), labels, rotation=45, ha="right")
        ax.set_ylabel("attributes per relation")
        ax.set_title("Attribute count by relation label")
        return _save(fig, path)


def explicitness_chart(stats: CorpusStats, path: str | Path) -> Path:
    items = list(stats.explicitness.items())
    names = [f"{label}.{role}" for (label, role), _ in items]
    values = [v for _, v in items]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, max(2.5, 0.22 * len(items) + 1)))
        y = np.arange(len(items))
        ax.barh(y, values, color="#4c72b0")
        ax.set_yticks(y, names)
        ax.invert_yaxis()
        ax.set_xlim(0, 1)
        ax.set_xlabel("explicitness")
        ax.set_title("Attribute frequency / compatible entities")
        return _save(fig, path)


def scores_chart(reports: Mapping[str, MetricsReport], path: str | Path) -> Path:
    """Grouped bars of F1 per strategy, one group per strategy, one bar per model."""
    strategies = [s for s in STRATEGY_ORDER if any(s in r.scores for r in reports.values())]
    width = 0.8 / max(1, len(reports))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(1.1 * len(strategies) + 2, 3.0))
        x = np.arange(len(strategies))
        for k, (name, rep) in enumerate(reports.items()):
            f1 = [rep.scores[s].f1 if s in rep.scores else 0.0 for s in strategies]
            ax.bar(x + (k - (len(reports) - 1) / 2) * width, f1, width, label=name)
        ax.set_xticks(x, [s.value for s in strategies])
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("F1")
        if len(reports) > 1:
            ax.legend(frameon=False)
        title = "F1 by strategy"
        if any(r.exclude_triggers for r in reports.values()):
            title += " (triggers excluded)"
        ax.set_title(title)
        return _save(fig, path)
