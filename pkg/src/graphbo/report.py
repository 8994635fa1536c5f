"""PNG figures written next to the CSV/JSON outputs (opt-in via ``--figures``)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bench import RegressionStats  # noqa: E402
from .history import SearchHistory  # noqa: E402
from .motifs import MotifScore  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_trace(hist: SearchHistory, path: str | Path, title: str = "search trace") -> Path:
    """Observed validation errors and the incumbent's validation/test error per evaluation."""
    n = [r.n_evals for r in hist.records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(n, [r.val_error for r in hist.records], s=8, alpha=0.4, color="grey", label="observed val")
    ax.step(n, hist.best_trace("val"), where="post", label="best val")
    ax.step(n, hist.best_trace("test"), where="post", label="incumbent test")
    ax.set_xlabel("evaluations")
    ax.set_ylabel("error")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_regression(stats: RegressionStats, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    reps = range(1, len(stats.per_repeat) + 1)
    ax.bar(reps, stats.per_repeat, color="tab:blue")
    ax.axhline(stats.mean, color="k", ls="--", label=f"mean {stats.mean:.3f} ± {stats.stderr:.3f}")
    for x, (rho, h) in zip(reps, zip(stats.per_repeat, stats.selected_H)):
        ax.text(x, rho, f"H{h}", ha="center", va="bottom", fontsize=6)
    ax.set_ylim(min(0.0, min(stats.per_repeat)), 1.05)
    ax.set_xlabel("repeat")
    ax.set_ylabel("Spearman rank correlation")
    ax.legend(loc="lower right")
    return _save(fig, path)


def plot_motifs(good: Sequence[MotifScore], bad: Sequence[MotifScore], path: str | Path, top: int = 10) -> Path:
    """Horizontal bars of the strongest good and bad motif scores."""
    rows = list(good[:top]) + list(bad[-top:])
    fig, ax = plt.subplots(figsize=(7, 0.35 * max(len(rows), 4) + 1))
    y = range(len(rows))
    ax.barh(y, [m.score for m in rows], color=["tab:green"] * len(good[:top]) + ["tab:red"] * len(bad[-top:]))
    ax.set_yticks(list(y), [m.decoded for m in rows], fontsize=7)
    ax.invert_yaxis()
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlabel("motif score (positive = lowers error)")
    return _save(fig, path)
