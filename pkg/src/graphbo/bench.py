"""Objectives for closed-domain search: tabular benchmarks and planted-motif synthetics."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from scipy import stats

from .candidates import random_graph
from .gp import SearchGrid, fit, predict
from .graph import N101_SPEC, GraphError, LabeledDigraph, SearchSpaceSpec, canonical_key, parse_graph, violations
from .history import SearchHistory
from .wl import FeatureIndex, Neighborhood, encode_subtree, extract_features

log = logging.getLogger(__name__)


class BenchmarkError(ValueError):
    pass


class QueryMode(str, Enum):
    DETERMINISTIC = "deterministic"
    NOISY = "noisy"


class Objective(Protocol):
    spec: SearchSpaceSpec

    def evaluate(self, graph: LabeledDigraph, rng: np.random.Generator) -> tuple[float, float]: ...

    def train_time(self, graph: LabeledDigraph) -> float: ...

    def sample(self, rng: np.random.Generator) -> LabeledDigraph: ...

    def contains(self, graph: LabeledDigraph) -> bool: ...


# -- tabular -------------------------------------------------------------------


@dataclass(frozen=True)
class Entry:
    graph: LabeledDigraph
    val_errors: tuple[float, ...]
    test_errors: tuple[float, ...]
    train_time: float = 0.0


@dataclass
class TabularBenchmark:
    entries: dict[str, Entry]
    spec: SearchSpaceSpec
    name: str = "benchmark"
    _keys: list[str] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        self._keys = list(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, g: LabeledDigraph) -> bool:
        return canonical_key(g) in self.entries

    def graphs(self) -> list[LabeledDigraph]:
        return [e.graph for e in self.entries.values()]

    def mean_val_error(self, g: LabeledDigraph) -> float:
        return float(np.mean(self._entry(g).val_errors))

    def _entry(self, g: LabeledDigraph) -> Entry:
        try:
            return self.entries[canonical_key(g)]
        except KeyError:
            raise BenchmarkError(f"architecture not in benchmark: {canonical_key(g)}") from None

    def to_jsonl(self) -> str:
        lines = []
        for e in self.entries.values():
            lines.append(
                json.dumps(
                    {
                        "graph": e.graph.to_dict(),
                        "val_acc": [1.0 - v for v in e.val_errors],
                        "test_acc": [1.0 - v for v in e.test_errors],
                        "train_time": e.train_time,
                    },
                    separators=(",", ":"),
                )
            )
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def _seed_list(rec: dict, name: str, lineno: int) -> tuple[float, ...]:
    vals = rec.get(name)
    if not isinstance(vals, list) or not vals:
        raise BenchmarkError(f"line {lineno}: '{name}' must be a non-empty list")
    out = []
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise BenchmarkError(f"line {lineno}: '{name}' holds a non-number {v!r}")
        if not 0.0 <= v <= 1.0:
            raise BenchmarkError(f"line {lineno}: '{name}' value {v} out of range [0, 1]")
        out.append(1.0 - float(v))
    return tuple(out)


def load_tabular(path: str | Path, spec: SearchSpaceSpec = N101_SPEC, name: str | None = None) -> TabularBenchmark:
    """Read a JSON-lines benchmark of accuracies; errors are stored as ``1 - acc``."""
    entries: dict[str, Entry] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BenchmarkError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "graph" not in rec:
                raise BenchmarkError(f"line {lineno}: record must be an object with a 'graph'")
            try:
                g = parse_graph(rec["graph"])
            except (GraphError, KeyError, TypeError) as exc:
                raise BenchmarkError(f"line {lineno}: bad graph: {exc}") from None
            bad = violations(g, spec)
            if bad:
                raise BenchmarkError(f"line {lineno}: graph violates search space: {'; '.join(bad)}")
            val = _seed_list(rec, "val_acc", lineno)
            test = _seed_list(rec, "test_acc", lineno)
            tt = rec.get("train_time", 0.0)
            if isinstance(tt, bool) or not isinstance(tt, (int, float)) or tt < 0:
                raise BenchmarkError(f"line {lineno}: 'train_time' must be a non-negative number")
            key = canonical_key(g)
            if key in entries:
                raise BenchmarkError(f"line {lineno}: duplicate architecture {key}")
            entries[key] = Entry(g, val, test, float(tt))
    if not entries:
        raise BenchmarkError(f"{path}: empty benchmark")
    return TabularBenchmark(entries, spec, name or Path(path).stem)


def query(
    bench: TabularBenchmark, graph: LabeledDigraph, mode: QueryMode | str, rng: np.random.Generator | None = None
) -> tuple[float, float]:
    """(validation error, test error); noisy mode draws one seed's validation value."""
    e = bench._entry(graph)
    test = float(np.mean(e.test_errors))
    if QueryMode(mode) is QueryMode.DETERMINISTIC:
        return float(np.mean(e.val_errors)), test
    if rng is None:
        raise ValueError("noisy queries need an rng")
    return e.val_errors[int(rng.integers(len(e.val_errors)))], test


@dataclass
class TabularObjective:
    """A benchmark as a search objective; sampling draws uniformly from its rows."""

    bench: TabularBenchmark
    mode: QueryMode = QueryMode.DETERMINISTIC

    @property
    def spec(self) -> SearchSpaceSpec:
        return self.bench.spec

    def evaluate(self, graph, rng):
        return query(self.bench, graph, self.mode, rng)

    def train_time(self, graph) -> float:
        return self.bench._entry(graph).train_time

    def sample(self, rng) -> LabeledDigraph:
        return self.bench.entries[self.bench._keys[int(rng.integers(len(self.bench._keys)))]].graph

    def contains(self, graph) -> bool:
        return graph in self.bench


# -- synthetic -------------------------------------------------------------


@dataclass(frozen=True)
class PlantedMotif:
    subtree: str
    level: int
    weight: float


@dataclass
class SyntheticObjective:
    """``error = clamp(base - sum_m w_m [motif m present] + N(0, noise_sd^2), 0, 1)``.

    Positive weights are accuracy-improving motifs, negative ones harmful.
    Reported test error is always the noiseless value.
    """

    planted: tuple[PlantedMotif, ...]
    base_error: float = 0.35
    noise_sd: float = 0.0
    spec: SearchSpaceSpec = N101_SPEC
    neighborhood: Neighborhood = Neighborhood.IN
    seconds_per_node: float = 60.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(m.weight) for m in self.planted):
            raise ValueError("motif weights must be finite")
        self._index = FeatureIndex()
        self._ids = [encode_subtree(m.subtree, m.level, self._index) for m in self.planted]

    @property
    def H_truth(self) -> int:
        return max((m.level for m in self.planted), default=0)

    @property
    def good(self) -> list[PlantedMotif]:
        return [m for m in self.planted if m.weight > 0]

    @property
    def bad(self) -> list[PlantedMotif]:
        return [m for m in self.planted if m.weight < 0]

    @property
    def optimum(self) -> float:
        """Lower bound on the noiseless error (attained when all good motifs co-occur)."""
        return min(max(self.base_error - sum(m.weight for m in self.good), 0.0), 1.0)

    def present(self, graph: LabeledDigraph) -> list[bool]:
        fv = extract_features(graph, self.H_truth, self.neighborhood, self._index)
        return [fv.counts.get(i, 0) > 0 for i in self._ids]

    def noiseless(self, graph: LabeledDigraph) -> float:
        gain = sum(m.weight for m, on in zip(self.planted, self.present(graph)) if on)
        return min(max(self.base_error - gain, 0.0), 1.0)

    def evaluate(self, graph, rng):
        return synthetic_eval(self, graph, rng), self.noiseless(graph)

    def train_time(self, graph) -> float:
        return self.seconds_per_node * graph.n_nodes

    def sample(self, rng) -> LabeledDigraph:
        return random_graph(self.spec, rng)

    def contains(self, graph) -> bool:
        return True

    def to_dict(self) -> dict:
        return {
            "planted": [[m.subtree, m.level, m.weight] for m in self.planted],
            "base_error": self.base_error,
            "noise_sd": self.noise_sd,
            "spec": self.spec.to_dict(),
            "neighborhood": self.neighborhood.value,
        }


def synthetic_eval(obj: SyntheticObjective, graph: LabeledDigraph, rng: np.random.Generator | None) -> float:
    gain = sum(m.weight for m, on in zip(obj.planted, obj.present(graph)) if on)
    noise = float(rng.normal(0.0, obj.noise_sd)) if obj.noise_sd > 0 else 0.0
    return min(max(obj.base_error - gain + noise, 0.0), 1.0)


DEFAULT_MOTIFS = (
    PlantedMotif("conv3x3(input)", 1, 0.06),
    PlantedMotif("output(conv1x1, conv3x3)", 1, 0.05),
    PlantedMotif("conv3x3(conv1x1)", 1, 0.04),
    PlantedMotif("maxpool3x3(conv3x3)", 1, 0.03),
    PlantedMotif("maxpool3x3(input)", 1, -0.04),
    PlantedMotif("output(maxpool3x3)", 1, -0.04),
)


def default_synthetic(noise_sd: float = 0.0, base_error: float = 0.35) -> SyntheticObjective:
    """N101-shaped space with four good and two bad level-1 motifs."""
    return SyntheticObjective(DEFAULT_MOTIFS, base_error, noise_sd)


def transfer_synthetic(noise_sd: float = 0.01) -> SyntheticObjective:
    """A related task: same planted motifs, different base error and weights."""
    motifs = tuple(PlantedMotif(m.subtree, m.level, m.weight * 1.25) for m in DEFAULT_MOTIFS)
    return SyntheticObjective(motifs, 0.42, noise_sd)


def materialize(
    obj: SyntheticObjective, n_graphs: int, rng: np.random.Generator, n_seeds: int = 3, name: str = "synthetic"
) -> TabularBenchmark:
    """Tabulate ``n_graphs`` distinct random graphs with ``n_seeds`` noisy draws each."""
    entries: dict[str, Entry] = {}
    tries = 0
    while len(entries) < n_graphs:
        tries += 1
        if tries > 100 * n_graphs:
            raise BenchmarkError(f"could only find {len(entries)} distinct graphs")
        g = random_graph(obj.spec, rng)
        key = canonical_key(g)
        if key in entries:
            continue
        val = tuple(synthetic_eval(obj, g, rng) for _ in range(n_seeds))
        test = tuple(synthetic_eval(obj, g, rng) for _ in range(n_seeds))
        entries[key] = Entry(g, val, test, obj.train_time(g))
    return TabularBenchmark(entries, obj.spec, name)


# -- evaluation ------------------------------------------------------------


def spearman(predictions: Sequence[float], truths: Sequence[float]) -> float:
    """Rank correlation with average ranks for ties; 0 if either side is constant."""
    a, b = np.asarray(predictions, float), np.asarray(truths, float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise ValueError("need at least two points")
    ra, rb = stats.rankdata(a), stats.rankdata(b)
    if ra.std() == 0 or rb.std() == 0:
        return 0.0
    return float(np.clip(np.corrcoef(ra, rb)[0, 1], -1.0, 1.0))


@dataclass(frozen=True)
class RegressionStats:
    mean: float
    stderr: float
    per_repeat: tuple[float, ...]
    selected_H: tuple[int, ...]
    n_train: int
    n_test: int

    def to_dict(self) -> dict:
        return {
            "spearman_mean": self.mean,
            "spearman_stderr": self.stderr,
            "per_repeat": list(self.per_repeat),
            "selected_H": list(self.selected_H),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "repeats": len(self.per_repeat),
        }


def _split_indices(n: int, n_train: int, n_test: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    return perm[:n_train], perm[n_train : n_train + n_test]


def run_regression_eval(
    source: TabularBenchmark | SyntheticObjective,
    grid: SearchGrid = SearchGrid(),
    n_train: int = 50,
    n_test: int = 400,
    repeats: int = 20,
    rng: np.random.Generator | None = None,
    threads: int = 1,
) -> RegressionStats:
    """Fit on random train splits and score Spearman rank correlation on held-out graphs."""
    rng = rng or np.random.default_rng(0)
    if isinstance(source, SyntheticObjective):
        graphs, truth = None, None
    else:
        if len(source) < n_train + n_test or n_train >= len(source):
            raise BenchmarkError(f"benchmark of {len(source)} cannot supply {n_train} + {n_test} graphs")
        graphs = source.graphs()
        truth = np.array([np.mean(e.val_errors) for e in source.entries.values()])
    streams = rng.spawn(repeats)

    def one(r: np.random.Generator) -> tuple[float, int]:
        if graphs is None:
            tab = materialize(source, n_train + n_test, r, n_seeds=1)
            gs, ys = tab.graphs(), np.array([e.val_errors[0] for e in tab.entries.values()])
            tr, te = np.arange(n_train), np.arange(n_train, n_train + n_test)
        else:
            gs, ys = graphs, truth
            tr, te = _split_indices(len(gs), n_train, n_test, r)
        model = fit([gs[i] for i in tr], ys[tr], grid)
        pred = predict(model, [gs[i] for i in te])
        return spearman(pred.mean, ys[te]), model.cfg.H

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, streams))
    else:
        results = [one(r) for r in streams]
    rhos = np.array([r[0] for r in results])
    se = float(rhos.std(ddof=1) / math.sqrt(len(rhos))) if len(rhos) > 1 else 0.0
    return RegressionStats(float(rhos.mean()), se, tuple(rhos.tolist()), tuple(r[1] for r in results), n_train, n_test)


def random_search(
    objective: Objective, spec: SearchSpaceSpec, budget: int, rng: np.random.Generator
) -> SearchHistory:
    """``budget`` distinct uniformly random evaluations."""
    hist = SearchHistory()
    seen: set[str] = set()
    while len(hist) < budget:
        for _ in range(1000):
            g = objective.sample(rng)
            if canonical_key(g) not in seen:
                break
        seen.add(canonical_key(g))
        val, test = objective.evaluate(g, rng)
        hist.add(0, g, val, test, objective.train_time(g))
    return hist
