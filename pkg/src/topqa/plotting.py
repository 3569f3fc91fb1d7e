"""Report figures, written straight to image files."""
from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .dataset import DomainStats  # noqa: E402
from .metrics import EvalReport  # noqa: E402


def plot_em_by_depth(report: EvalReport, path: str | os.PathLike, title: str = "") -> None:
    """Bars of EM per reference depth, with mean utterance length on a
    second axis."""
    depths = [r.depth for r in report.rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(depths, [r.em for r in report.rows], color="#4c72b0", label="EM")
    for r in report.rows:
        ax.annotate(f"n={r.n}", (r.depth, r.em), ha="center", va="bottom", fontsize=7)
    ax.set_xlabel("tree depth")
    ax.set_ylabel("exact match")
    ax.set_ylim(0, 1.1)
    ax.set_xticks(depths)
    twin = ax.twinx()
    twin.plot(depths, [r.avg_length for r in report.rows], "o-", color="#dd8452", label="L")
    twin.set_ylabel("mean utterance length")
    ax.set_title(title or f"EM {report.em:.3f} over {report.n} utterances")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_stats(rows: Sequence[DomainStats], path: str | os.PathLike) -> None:
    """Flat share and mean depth per domain, side by side."""
    names = [r.domain for r in rows]
    fig, (left, right) = plt.subplots(1, 2, figsize=(8, 3.5))
    left.bar(names, [r.flat_pct for r in rows], color="#55a868")
    left.set_ylabel("flat utterances (%)")
    left.set_ylim(0, 100)
    right.bar(names, [r.mean_depth for r in rows], color="#c44e52")
    right.set_ylabel("mean depth")
    for ax in (left, right):
        ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
