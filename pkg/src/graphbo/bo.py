"""Acquisition functions and the batch BO loop over graphs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .candidates import MotifFilter, PoolConfig, generate_pool
from .gp import GPFitError, GPModel, SearchGrid, fit, predict
from .graph import LabeledDigraph, SearchSpaceSpec, canonical_key
from .history import SearchHistory
from .motifs import MotifSet, merge_scores, motif_scores, split_quantiles

log = logging.getLogger(__name__)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Acquisition(str, Enum):
    EI = "EI"
    UCB = "UCB"


class SearchAborted(RuntimeError):
    def __init__(self, msg: str, history: SearchHistory):
        super().__init__(msg)
        self.history = history


def expected_improvement(mean, sd, incumbent_value, xi: float = 0.0):
    """EI below ``incumbent_value`` for minimisation; vectorised over mean/sd."""
    mean, sd = np.asarray(mean, float), np.asarray(sd, float)
    diff = incumbent_value - mean - xi
    safe = np.where(sd > 0, sd, 1.0)
    with np.errstate(over="ignore"):
        gamma = diff / safe
        # sd * (gamma Phi + phi), arranged to stay finite as sd -> 0
        ei = diff * ndtr(gamma) + safe * _INV_SQRT_2PI * np.exp(-0.5 * np.minimum(gamma**2, 1e300))
    out = np.where(sd > 0, ei, np.maximum(diff, 0.0))
    return out if out.ndim else float(out)


def ucb_beta(n_iteration: int, beta0: float = 3.0) -> float:
    return beta0 * math.sqrt(0.5 * math.log(2 * (n_iteration + 1)))


def ucb(mean, sd, n_iteration: int, beta0: float = 3.0):
    """Optimistic score ``-mean + beta_n * sd`` (larger is better)."""
    out = -np.asarray(mean, float) + ucb_beta(n_iteration, beta0) * np.asarray(sd, float)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class BOConfig:
    budget: int = 150
    batch: int = 5
    n_init: int = 10
    acquisition: Acquisition = Acquisition.EI
    ei_xi: float = 0.0
    ucb_beta0: float = 3.0
    pool: PoolConfig = field(default_factory=PoolConfig)
    grid: SearchGrid = field(default_factory=SearchGrid)
    transfer_motifs: MotifSet | None = None
    transfer_quantile: float = 0.25
    transfer_min_occurrences: int = 10

    def __post_init__(self) -> None:
        object.__setattr__(self, "acquisition", Acquisition(self.acquisition))
        if self.batch < 1 or self.n_init < 2 or self.budget < self.n_init:
            raise ValueError("need batch >= 1, n_init >= 2 and budget >= n_init")


def acquisition_scores(model: GPModel, pool: Sequence[LabeledDigraph], cfg: BOConfig, iteration: int) -> np.ndarray:
    pred = predict(model, pool)
    if cfg.acquisition is Acquisition.EI:
        return expected_improvement(pred.mean, pred.sd, float(model.targets.min()), cfg.ei_xi)
    return ucb(pred.mean, pred.sd, iteration, cfg.ucb_beta0)


def top_b(scores: Sequence[float], b: int) -> list[int]:
    """Indices of the ``b`` largest scores; earlier entries win ties."""
    scores = np.asarray(scores, float)
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:b]


def select_batch(
    pool: Sequence[LabeledDigraph], model: GPModel, cfg: BOConfig, iteration: int = 0, b: int | None = None
) -> list[LabeledDigraph]:
    b = cfg.batch if b is None else b
    if len(pool) < b:
        raise ValueError(f"pool of {len(pool)} cannot supply a batch of {b}")
    scores = acquisition_scores(model, pool, cfg, iteration)
    return [pool[i] for i in top_b(scores, b)]


def transfer_filter(model: GPModel, past: MotifSet, cfg: BOConfig) -> MotifFilter:
    """Good-motif filter from past-task scores merged with the current surrogate's."""
    merged = merge_scores(past.motifs, motif_scores(model), cfg.transfer_min_occurrences)
    good, _ = split_quantiles(merged, cfg.transfer_quantile) if merged else ([], [])
    H = max([model.cfg.H] + [m.level for m in good])
    ids = MotifSet(H, past.mode, tuple(good)).ids_in(model.index)
    return MotifFilter(model.index, frozenset(ids), H, model.cfg.neighborhood)


def run_bo(objective, spec: SearchSpaceSpec, cfg: BOConfig, rng: np.random.Generator) -> SearchHistory:
    """Batch BO: random initial design, then pool -> fit -> acquire -> evaluate.

    Exactly ``cfg.budget`` evaluations are made; the last batch is truncated
    if needed. A surrogate failure raises :class:`SearchAborted` carrying
    the partial history.
    """
    hist = SearchHistory()
    seen: set[str] = set()

    def evaluate(it: int, g: LabeledDigraph) -> None:
        val, test = objective.evaluate(g, rng)
        hist.add(it, g, val, test, objective.train_time(g))
        seen.add(canonical_key(g))

    while len(hist) < cfg.n_init:
        for _ in range(1000):
            g = objective.sample(rng)
            if canonical_key(g) not in seen:
                break
        evaluate(0, g)

    it = 0
    while len(hist) < cfg.budget:
        it += 1
        graphs = [r.graph for r in hist.records]
        errors = [r.val_error for r in hist.records]
        try:
            model = fit(graphs, errors, cfg.grid)
        except (GPFitError, ValueError) as exc:
            raise SearchAborted(f"surrogate fit failed at iteration {it}: {exc}", hist) from exc
        pool_cfg = cfg.pool
        if cfg.transfer_motifs is not None:
            pool_cfg = replace(pool_cfg, motif_filter=transfer_filter(model, cfg.transfer_motifs, cfg))
        pool = generate_pool(
            spec, hist.observations, pool_cfg, rng, sampler=objective.sample, membership=objective.contains, exclude=seen
        )
        b = min(cfg.batch, cfg.budget - len(hist))
        if not pool:
            raise SearchAborted(f"empty candidate pool at iteration {it}", hist)
        for g in select_batch(pool, model, cfg, it - 1, min(b, len(pool))):
            evaluate(it, g)
    return hist

