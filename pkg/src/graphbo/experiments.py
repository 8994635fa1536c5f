"""Reusable experiment drivers shared by the CLI and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bench import SyntheticObjective, materialize
from .bo import BOConfig, run_bo
from .gp import SearchGrid, fit
from .history import SearchHistory
from .motifs import MotifSet, export_motifs, rank_motifs


def evals_to_reach(hist: SearchHistory, threshold: float) -> int | None:
    """Evaluations until the incumbent's test error first drops to ``threshold``."""
    for r in hist.records:
        if r.best_test_error <= threshold + 1e-12:
            return r.n_evals
    return None


def learn_motifs(
    objective,
    n_samples: int,
    rng: np.random.Generator,
    *,
    min_occurrences: int = 10,
    quantile: float = 0.25,
    grid: SearchGrid | None = None,
) -> tuple[MotifSet, MotifSet]:
    """Fit a surrogate on ``n_samples`` random evaluations; return (good, bad) motif sets."""
    graphs, errors = [], []
    seen: set = set()
    for _ in range(100 * n_samples):
        if len(graphs) == n_samples:
            break
        g = objective.sample(rng)
        if g in seen:
            continue
        seen.add(g)
        graphs.append(g)
        errors.append(objective.evaluate(g, rng)[0])
    else:
        if len(graphs) < n_samples:
            raise ValueError(f"could only draw {len(graphs)} distinct graphs, wanted {n_samples}")
    model = fit(graphs, errors, grid or SearchGrid())
    good, bad = rank_motifs(model, min_occurrences, quantile)
    return export_motifs(model, good), export_motifs(model, bad)


@dataclass(frozen=True)
class TransferTrial:
    seed: int
    plain: int
    transfer: int


def transfer_trial(
    past: SyntheticObjective,
    current: SyntheticObjective,
    cfg: BOConfig,
    seed: int,
    *,
    n_past: int = 300,
    tolerance: float = 0.01,
) -> TransferTrial:
    """Evaluations-to-target for plain and motif-pruned search on ``current``.

    Runs that never reach ``current.optimum + tolerance`` count as
    ``budget + 1``. Both searches share the same seed.
    """
    root = np.random.default_rng(seed)
    motif_rng, = root.spawn(1)
    good, _ = learn_motifs(past, n_past, motif_rng)
    target = current.optimum + tolerance
    out = []
    for tcfg in (cfg, replace(cfg, transfer_motifs=good)):
        hist = run_bo(current, current.spec, tcfg, np.random.default_rng(seed))
        n = evals_to_reach(hist, target)
        out.append(cfg.budget + 1 if n is None else n)
    return TransferTrial(seed, out[0], out[1])
