"""Weisfeiler-Lehman subtree features and kernels over labelled DAGs.

Labels are compressed with an exact dictionary (first-seen integer ids)
rather than a hash, so distinct subtree patterns can never collide. Every
id belongs to exactly one WL level; the string stored for a level-h feature
is ``"<prefix id>|<sorted neighbour ids>"`` where the prefix is the node's
own level h-1 id.
"""

from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .graph import LabeledDigraph

_tokens = itertools.count(1)


class KernelError(ValueError):
    pass


class Base(str, Enum):
    DOT = "dot_product"
    HIST = "histogram_intersection"


class Neighborhood(str, Enum):
    IN = "in_neighbors"
    OUT = "out_neighbors"
    BOTH = "both"


@dataclass(frozen=True)
class KernelConfig:
    H: int = 1
    base: Base = Base.DOT
    neighborhood: Neighborhood = Neighborhood.IN
    normalize: bool = False

    def __post_init__(self) -> None:
        if self.H < 0:
            raise ValueError("H must be non-negative")
        object.__setattr__(self, "base", Base(self.base))
        object.__setattr__(self, "neighborhood", Neighborhood(self.neighborhood))

    def with_H(self, H: int) -> KernelConfig:
        return KernelConfig(H, self.base, self.neighborhood, self.normalize)


class FeatureIndex:
    """Bijection between WL feature strings and integer ids."""

    def __init__(self) -> None:
        self.forward: dict[tuple[int, str], int] = {}
        self.reverse: dict[int, str] = {}
        self.level_of: dict[int, int] = {}
        self.token = next(_tokens)
        self._decoded: dict[int, str] = {}

    def __len__(self) -> int:
        return len(self.reverse)

    def __contains__(self, fid: int) -> bool:
        return fid in self.reverse

    def add(self, level: int, string: str) -> int:
        key = (level, string)
        fid = self.forward.get(key)
        if fid is None:
            fid = len(self.reverse)
            self.forward[key] = fid
            self.reverse[fid] = string
            self.level_of[fid] = level
        return fid

    def get(self, level: int, string: str) -> int | None:
        return self.forward.get((level, string))

    def parts(self, fid: int) -> tuple[int, list[int]]:
        """(prefix id, neighbour ids) of a level >= 1 feature."""
        prefix, _, rest = self.reverse[fid].partition("|")
        return int(prefix), [int(x) for x in rest.split(",")] if rest else []

    def to_dict(self) -> dict:
        return {
            "features": [
                {"id": i, "string": self.reverse[i], "level": self.level_of[i]} for i in sorted(self.reverse)
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> FeatureIndex:
        idx = cls()
        for rec in sorted(d["features"], key=lambda r: r["id"]):
            fid = idx.add(int(rec["level"]), rec["string"])
            if fid != rec["id"]:
                raise KernelError(f"feature ids must be contiguous from 0; got {rec['id']}")
        return idx


@dataclass(frozen=True)
class FeatureVector:
    """Sparse WL feature counts; zero counts are never stored."""

    counts: dict[int, int]
    H: int
    neighborhood: Neighborhood
    index_token: int = field(compare=False)

    def restrict(self, H: int, index: FeatureIndex) -> FeatureVector:
        """Drop features above level ``H``."""
        if H > self.H:
            raise KernelError(f"cannot restrict an H={self.H} vector to H={H}")
        kept = {f: c for f, c in self.counts.items() if index.level_of[f] <= H}
        return FeatureVector(kept, H, self.neighborhood, self.index_token)


def _neighbors(g: LabeledDigraph, mode: Neighborhood) -> list[list[int]]:
    if mode is Neighborhood.IN:
        return g.in_neighbors()
    if mode is Neighborhood.OUT:
        return g.out_neighbors()
    ins, outs = g.in_neighbors(), g.out_neighbors()
    return [a + b for a, b in zip(ins, outs)]


def extract_features(
    g: LabeledDigraph,
    H: int,
    mode: Neighborhood | str = Neighborhood.IN,
    index: FeatureIndex | None = None,
) -> FeatureVector:
    """WL subtree feature counts of ``g`` for levels 0..H, extending ``index``."""
    if H < 0:
        raise ValueError("H must be non-negative")
    mode = Neighborhood(mode)
    if index is None:
        index = FeatureIndex()
    labels = [index.add(0, s) for s in g.node_labels]
    counts = Counter(labels)
    nbrs = _neighbors(g, mode) if H else []
    for h in range(1, H + 1):
        labels = [
            index.add(h, f"{labels[v]}|{','.join(str(x) for x in sorted(labels[u] for u in nbrs[v]))}")
            for v in range(g.n_nodes)
        ]
        counts.update(labels)
    return FeatureVector(dict(counts), H, mode, index.token)


def _check_compatible(a: FeatureVector, b: FeatureVector, cfg: KernelConfig | None = None) -> None:
    if a.index_token != b.index_token:
        raise KernelError("feature vectors were built against different indices")
    if a.H != b.H or a.neighborhood != b.neighborhood:
        raise KernelError("feature vectors differ in H or neighbourhood mode")
    if cfg is not None and (cfg.H != a.H or cfg.neighborhood != a.neighborhood):
        raise KernelError("kernel config does not match the feature vectors")


def _raw(a: dict[int, int], b: dict[int, int], base: Base) -> float:
    if len(a) > len(b):
        a, b = b, a
    if base is Base.DOT:
        return float(sum(c * b[f] for f, c in a.items() if f in b))
    return float(sum(min(c, b[f]) for f, c in a.items() if f in b))


def kernel_value(a: FeatureVector, b: FeatureVector, cfg: KernelConfig) -> float:
    _check_compatible(a, b, cfg)
    k = _raw(a.counts, b.counts, cfg.base)
    if not cfg.normalize:
        return k
    kaa, kbb = _raw(a.counts, a.counts, cfg.base), _raw(b.counts, b.counts, cfg.base)
    if kaa <= 0 or kbb <= 0:
        return 0.0
    return k / np.sqrt(kaa * kbb)


# -- dense helpers used by the GP -------------------------------------------


def feature_matrix(features: Sequence[FeatureVector], columns: Sequence[int]) -> np.ndarray:
    """Dense count matrix; features outside ``columns`` are ignored."""
    pos = {f: j for j, f in enumerate(columns)}
    X = np.zeros((len(features), len(columns)))
    for i, fv in enumerate(features):
        for f, c in fv.counts.items():
            j = pos.get(f)
            if j is not None:
                X[i, j] = c
    return X


def base_gram(XA: np.ndarray, XB: np.ndarray, base: Base) -> np.ndarray:
    """Pairwise unnormalised base kernel between rows of two count matrices."""
    if base is Base.DOT:
        return XA @ XB.T
    # min(a, b) = sum_t [a >= t][b >= t]
    top = int(max(XA.max(initial=0), XB.max(initial=0)))
    K = np.zeros((XA.shape[0], XB.shape[0]))
    for t in range(1, top + 1):
        K += (XA >= t).astype(float) @ (XB >= t).astype(float).T
    return K


def self_kernel(fv: FeatureVector, base: Base) -> float:
    if base is Base.DOT:
        return float(sum(c * c for c in fv.counts.values()))
    return float(sum(fv.counts.values()))


def normalize_gram(K: np.ndarray, diag_a: np.ndarray, diag_b: np.ndarray) -> np.ndarray:
    scale = np.sqrt(np.outer(diag_a, diag_b))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(scale > 0, K / np.where(scale > 0, scale, 1.0), 0.0)
    return out


def gram(graphs: Sequence[LabeledDigraph], cfg: KernelConfig) -> tuple[np.ndarray, FeatureIndex]:
    """N x N kernel matrix; features are extracted once per graph."""
    if not graphs:
        raise ValueError("need at least one graph")
    index = FeatureIndex()
    feats = [extract_features(g, cfg.H, cfg.neighborhood, index) for g in graphs]
    columns = sorted(index.reverse)
    X = feature_matrix(feats, columns)
    K = base_gram(X, X, cfg.base)
    if cfg.normalize:
        d = np.diag(K).copy()
        K = normalize_gram(K, d, d)
    return K, index


def cross_gram(
    train: Sequence[LabeledDigraph],
    test: Sequence[LabeledDigraph],
    cfg: KernelConfig,
    index: FeatureIndex,
) -> np.ndarray:
    """|test| x |train| kernel matrix against an existing index.

    Features first seen in ``test`` are added to ``index`` but contribute
    nothing to train-test values.
    """
    train_f = [extract_features(g, cfg.H, cfg.neighborhood, index) for g in train]
    columns = sorted({f for fv in train_f for f in fv.counts})
    test_f = [extract_features(g, cfg.H, cfg.neighborhood, index) for g in test]
    Xtr, Xte = feature_matrix(train_f, columns), feature_matrix(test_f, columns)
    K = base_gram(Xte, Xtr, cfg.base)
    if cfg.normalize:
        K = normalize_gram(
            K,
            np.array([self_kernel(f, cfg.base) for f in test_f]),
            np.array([self_kernel(f, cfg.base) for f in train_f]),
        )
    return K


# -- additive combination ----------------------------------------------------

Kernel = Callable[[object, object], float]


@dataclass(frozen=True)
class KernelCombination:
    components: tuple[tuple[Kernel, float], ...]

    def __post_init__(self) -> None:
        weights = [w for _, w in self.components]
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
            raise KernelError(f"weights must be non-negative and sum to 1, got {weights}")


def combine(combo: KernelCombination, a: object, b: object) -> float:
    return float(sum(w * k(a, b) for k, w in combo.components))


def combine_grams(grams: Iterable[np.ndarray], weights: Iterable[float]) -> np.ndarray:
    grams, weights = list(grams), list(weights)
    if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
        raise KernelError(f"weights must be non-negative and sum to 1, got {weights}")
    return sum(w * K for K, w in zip(grams, weights))


# -- human-readable features ---------------------------------------------------


def root_label(fid: int, index: FeatureIndex) -> str:
    while index.level_of[fid] > 0:
        fid = index.parts(fid)[0]
    return index.reverse[fid]


def decode_feature(fid: int, index: FeatureIndex) -> str:
    """Expand a feature id into its subtree, e.g. ``"conv3x3(input)"``.

    Level-0 features decode to the bare label; a level-h feature is its root
    label followed by the level h-1 subtrees of its neighbours, sorted.
    """
    if fid not in index:
        raise KernelError(f"unknown feature id {fid}")
    cached = index._decoded.get(fid)
    if cached is not None:
        return cached
    if index.level_of[fid] == 0:
        out = index.reverse[fid]
    else:
        _, kids = index.parts(fid)
        out = f"{root_label(fid, index)}({', '.join(sorted(decode_feature(k, index) for k in kids))})"
    index._decoded[fid] = out
    return out


Tree = tuple[str, "list[Tree] | None"]


def parse_subtree(text: str) -> Tree:
    """Parse ``root(child, child(...))``; a bare label has ``None`` children."""
    pos = 0

    def node() -> Tree:
        nonlocal pos
        start = pos
        while pos < len(text) and text[pos] not in "(),":
            pos += 1
        label = text[start:pos].strip()
        if not label:
            raise KernelError(f"empty label at offset {start} in {text!r}")
        if pos < len(text) and text[pos] == "(":
            pos += 1
            kids: list[Tree] = []
            if pos < len(text) and text[pos] == ")":
                pos += 1
                return label, kids
            while True:
                kids.append(node())
                if pos >= len(text):
                    raise KernelError(f"unbalanced parentheses in {text!r}")
                if text[pos] == ",":
                    pos += 1
                    while pos < len(text) and text[pos] == " ":
                        pos += 1
                    continue
                if text[pos] == ")":
                    pos += 1
                    return label, kids
        return label, None

    tree = node()
    if pos != len(text):
        raise KernelError(f"trailing characters in {text!r}")
    return tree


def _depth(tree: Tree) -> int:
    _, kids = tree
    if kids is None:
        return 0
    return 1 + max((_depth(k) for k in kids), default=0)


def _truncate(tree: Tree, d: int) -> Tree:
    label, kids = tree
    if d == 0:
        return label, None
    return label, [_truncate(k, d - 1) for k in (kids or [])]


def encode_subtree(text: str, level: int | None, index: FeatureIndex, create: bool = True) -> int | None:
    """Inverse of :func:`decode_feature`.

    ``level`` is needed because a childless root reads the same at every
    level >= 1; when omitted the nesting depth is used. With
    ``create=False`` returns None for patterns the index has never seen.
    """
    tree = parse_subtree(text)
    if level is None:
        level = _depth(tree)

    def enc(t: Tree, h: int) -> int | None:
        label, kids = t
        if h == 0:
            if kids is not None:
                raise KernelError(f"{text!r} is deeper than level {level}")
            return index.add(0, label) if create else index.get(0, label)
        if kids is None:
            raise KernelError(f"{text!r} is shallower than level {level}")
        prefix = enc(_truncate(t, h - 1), h - 1)
        ids = [enc(k, h - 1) for k in kids]
        if prefix is None or any(i is None for i in ids):
            return None
        s = f"{prefix}|{','.join(str(i) for i in sorted(ids))}"
        return index.add(h, s) if create else index.get(h, s)

    return enc(tree, level)
