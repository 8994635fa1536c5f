"""Random sampling and single-edit mutation of search-space graphs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Collection, Sequence

import numpy as np

from .graph import LabeledDigraph, SearchSpaceSpec, canonical_key, is_valid, prune_disconnected
from .wl import FeatureIndex, KernelConfig, Neighborhood, extract_features

log = logging.getLogger(__name__)

MAX_SAMPLE_ATTEMPTS = 10_000
MAX_EDIT_ATTEMPTS = 200
MAX_DUPLICATE_RUN = 100
DRAW_FACTOR = 10


class InfeasibleSpace(RuntimeError):
    pass


class PoolExhausted(RuntimeError):
    def __init__(self, msg: str, pool: list[LabeledDigraph], acceptance: float):
        super().__init__(msg)
        self.pool = pool
        self.acceptance = acceptance


class Strategy(str, Enum):
    RANDOM = "random"
    MUTATE = "mutate"
    HALF_HALF = "half_half"


@dataclass(frozen=True)
class MotifFilter:
    """Accept a graph iff it contains at least one of ``ids``."""

    index: FeatureIndex
    ids: frozenset[int]
    H: int
    neighborhood: Neighborhood = Neighborhood.IN

    def matches(self, g: LabeledDigraph) -> int:
        fv = extract_features(g, self.H, self.neighborhood, self.index)
        return sum(1 for m in self.ids if m in fv.counts)

    @classmethod
    def from_config(cls, index: FeatureIndex, ids, cfg: KernelConfig) -> MotifFilter:
        return cls(index, frozenset(ids), cfg.H, cfg.neighborhood)


@dataclass(frozen=True)
class PoolConfig:
    pool_size: int = 200
    strategy: Strategy = Strategy.HALF_HALF
    n_parents: int = 10
    dedup: bool = True
    motif_filter: MotifFilter | None = None
    max_filter_attempts: int | None = None  # default 50 * pool_size

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.pool_size < 1 or self.n_parents < 1:
            raise ValueError("pool_size and n_parents must be >= 1")

    @property
    def attempt_cap(self) -> int:
        return self.max_filter_attempts or 50 * self.pool_size


def random_graph(spec: SearchSpaceSpec, rng: np.random.Generator) -> LabeledDigraph:
    """Sample a valid graph with every node on an input->output path.

    Node 0 is the input and the last node the output; the node count is
    uniform over ``[min_nodes, max_nodes]``. Each node gets a random earlier
    parent, each node still lacking a successor gets a random later child,
    and then a uniform number of extra forward edges (up to ``max_edges``)
    is added. Intermediate labels are uniform over the operation labels.
    Because no node is ever pruned, the node-count draw is kept exactly.
    """
    ops = spec.op_labels
    for _ in range(MAX_SAMPLE_ATTEMPTS):
        n = int(rng.integers(spec.min_nodes, spec.max_nodes + 1))
        if n > 2 and not ops:
            raise InfeasibleSpace("space has no operation labels for intermediate nodes")
        edges = {(int(rng.integers(j)), j) for j in range(1, n)}
        has_out = {u for u, _ in edges}
        for i in range(n - 2, -1, -1):
            if i not in has_out:
                edges.add((i, int(rng.integers(i + 1, n))))
        if len(edges) > spec.max_edges:
            continue
        free = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in edges]
        n_extra = int(rng.integers(0, min(spec.max_edges - len(edges), len(free)) + 1))
        edges.update(free[i] for i in rng.choice(len(free), size=n_extra, replace=False))
        mid = [ops[i] for i in rng.integers(0, len(ops), size=n - 2)] if n > 2 else []
        g = LabeledDigraph((spec.input_label, *mid, spec.output_label), tuple(edges))
        if is_valid(g, spec):
            return g
    raise InfeasibleSpace(f"no valid graph found in {MAX_SAMPLE_ATTEMPTS} attempts")


def _relabelable(g: LabeledDigraph, spec: SearchSpaceSpec) -> list[int]:
    io = {spec.input_label, spec.output_label}
    ops = set(spec.op_labels)
    return [i for i, s in enumerate(g.node_labels) if s not in io and ops - {s}]


def _edit_classes(g: LabeledDigraph, spec: SearchSpaceSpec) -> list[str]:
    classes = []
    if _relabelable(g, spec):
        classes.append("relabel")
    if g.n_edges < spec.max_edges and _addable(g, spec):
        classes.append("add")
    if g.n_edges > 0:
        classes.append("remove")
    return classes


def _addable(g: LabeledDigraph, spec: SearchSpaceSpec) -> list[tuple[int, int]]:
    order = g.topological_order()
    pos = {v: i for i, v in enumerate(order)}
    have = set(g.edges)
    out = []
    for u in range(g.n_nodes):
        for v in range(g.n_nodes):
            if u != v and pos[u] < pos[v] and (u, v) not in have:
                if g.node_labels[v] == spec.input_label or g.node_labels[u] == spec.output_label:
                    continue
                out.append((u, v))
    return out


def apply_edit(g: LabeledDigraph, spec: SearchSpaceSpec, rng: np.random.Generator) -> LabeledDigraph:
    """One random edit (relabel, add edge, or remove edge) without pruning."""
    classes = _edit_classes(g, spec)
    if not classes:
        raise InfeasibleSpace("graph admits no single edit")
    kind = classes[int(rng.integers(len(classes)))]
    labels, edges = list(g.node_labels), list(g.edges)
    if kind == "relabel":
        nodes = _relabelable(g, spec)
        i = nodes[int(rng.integers(len(nodes)))]
        choices = [s for s in spec.op_labels if s != labels[i]]
        labels[i] = choices[int(rng.integers(len(choices)))]
    elif kind == "add":
        cands = _addable(g, spec)
        edges.append(cands[int(rng.integers(len(cands)))])
    else:
        del edges[int(rng.integers(len(edges)))]
    return LabeledDigraph(tuple(labels), tuple(edges))


def mutate(parent: LabeledDigraph, spec: SearchSpaceSpec, rng: np.random.Generator) -> LabeledDigraph:
    """Apply one random edit, prune, and retry until the child is valid and new."""
    pkey = canonical_key(parent)
    for _ in range(MAX_EDIT_ATTEMPTS):
        child = prune_disconnected(apply_edit(parent, spec, rng), spec)
        if not child.is_empty and is_valid(child, spec) and canonical_key(child) != pkey:
            return child
    raise InfeasibleSpace("no valid single edit found")


def pool_plan(cfg: PoolConfig) -> tuple[int, int]:
    """(number of mutants, number of random samples) making up a pool."""
    if cfg.strategy is Strategy.RANDOM:
        return 0, cfg.pool_size
    if cfg.strategy is Strategy.MUTATE:
        return cfg.pool_size, 0
    n_mut = math.ceil(cfg.pool_size / 2)
    return n_mut, cfg.pool_size - n_mut


Sampler = Callable[[np.random.Generator], LabeledDigraph]


def generate_pool(
    spec: SearchSpaceSpec,
    history: Sequence[tuple[LabeledDigraph, float]],
    cfg: PoolConfig,
    rng: np.random.Generator,
    *,
    sampler: Sampler | None = None,
    membership: Callable[[LabeledDigraph], bool] | None = None,
    exclude: Collection[str] = (),
    strict: bool = False,
) -> list[LabeledDigraph]:
    """Assemble a candidate pool.

    ``history`` holds (graph, raw error) observations; mutation parents are
    the ``n_parents`` lowest-error ones. ``sampler`` replaces
    :func:`random_graph` and ``membership`` restricts mutants (for
    non-exhaustive tabular benchmarks). Once ``MAX_DUPLICATE_RUN`` mutation
    draws in a row yield nothing new (duplicates, non-members, filtered), the
    remaining mutation slots go to random samples. The attempt
    cap counts non-duplicate candidates offered to the motif filter (total
    draws are capped at ``DRAW_FACTOR`` times that). When a cap is hit the
    partial pool is returned with a warning, or :class:`PoolExhausted` is
    raised if ``strict``.
    """
    n_mut, n_rand = pool_plan(cfg)
    if n_mut and not history:
        raise ValueError("mutation needs a non-empty history")
    sample = sampler or (lambda r: random_graph(spec, r))
    ranked = sorted(range(len(history)), key=lambda i: (history[i][1], i))
    parents = [history[i][0] for i in ranked[: cfg.n_parents]]

    seen = set(exclude) if cfg.dedup else set()
    if cfg.dedup:
        seen.update(canonical_key(g) for g, _ in history)
    pool: list[LabeledDigraph] = []
    tested = draws = 0
    cap = cfg.attempt_cap

    def draw(from_mutation: bool) -> LabeledDigraph | None:
        if not from_mutation:
            return sample(rng)
        try:
            child = mutate(parents[int(rng.integers(len(parents)))], spec, rng)
        except InfeasibleSpace:
            return None
        return child if membership is None or membership(child) else None

    carry = 0
    for target, from_mut in ((n_mut, True), (n_rand, False)):
        target += carry
        got = 0
        idle = 0
        while got < target:
            if tested >= cap or draws >= DRAW_FACTOR * cap:
                acc = len(pool) / max(tested, 1)
                msg = f"pool attempt cap {cap} reached with {len(pool)}/{cfg.pool_size} accepted (rate {acc:.3f})"
                if strict:
                    raise PoolExhausted(msg, pool, acc)
                log.warning(msg)
                return pool
            if from_mut and idle >= MAX_DUPLICATE_RUN:
                # parents' neighbourhoods are used up; fill the rest randomly
                break
            draws += 1
            idle += 1
            g = draw(from_mut)
            if g is None:
                continue
            key = canonical_key(g)
            if cfg.dedup and key in seen:
                continue
            tested += 1
            if cfg.motif_filter is not None and cfg.motif_filter.matches(g) == 0:
                continue
            idle = 0
            seen.add(key)
            pool.append(g)
            got += 1
        carry = target - got
    return pool
