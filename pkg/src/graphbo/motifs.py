"""Motif attribution from posterior-mean derivatives w.r.t. WL feature counts.

All derivatives are of the posterior mean in transformed-error space. The
transform is increasing in error, so a *negative* derivative marks an
accuracy-improving feature; :attr:`MotifScore.score` is re-signed so that
positive means good.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .gp import GPModel
from .graph import LabeledDigraph
from .wl import (
    Base,
    FeatureIndex,
    FeatureVector,
    KernelConfig,
    KernelError,
    decode_feature,
    encode_subtree,
    extract_features,
    self_kernel,
)

EV_FLOOR = 1e-12


@dataclass(frozen=True)
class MotifScore:
    feature_id: int
    decoded: str
    level: int
    ag: float
    ev: float
    occurrences: int
    score: float

    def to_dict(self) -> dict:
        return {
            "id": self.feature_id,
            "subtree": self.decoded,
            "level": self.level,
            "ag": self.ag,
            "ev": self.ev,
            "occurrences": self.occurrences,
            "score": self.score,
        }


def motif_score(ag: float, ev: float) -> float:
    return -ag / math.sqrt(max(ev, EV_FLOOR))


def dot_gradients(Phi: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """d mu / d phi_j = sum_i Phi[i, j] * alpha[i] for the linear kernel."""
    return np.asarray(Phi).T @ np.asarray(alpha)


def _gradient_vector(model: GPModel, fv: FeatureVector) -> np.ndarray:
    """Gradient over ``model.columns`` at the count vector ``fv``."""
    X, alpha, base = model.X, model.alpha, model.cfg.base
    x = np.array([fv.counts.get(c, 0) for c in model.columns], float)
    if base is Base.DOT:
        dk = X  # d k(x, x_i) / d x_j
    else:
        dk = np.where(x[None, :] < X, 1.0, np.where(x[None, :] == X, 0.5, 0.0))
    if not model.cfg.normalize:
        return dk.T @ alpha
    kxx = self_kernel(fv, base)
    if kxx <= 0:
        return np.zeros(len(model.columns))
    if base is Base.DOT:
        k = X @ x
        dkxx = 2 * x
    else:
        k = np.minimum(X, x[None, :]).sum(1)
        dkxx = np.ones_like(x)
    kii = model.train_diag
    coef = np.where(kii > 0, alpha / np.sqrt(np.where(kii > 0, kii, 1.0)), 0.0)
    # d/dx [k / sqrt(kxx)] = dk / sqrt(kxx) - k * dkxx / (2 kxx^1.5)
    return (dk.T @ coef) / math.sqrt(kxx) - (k @ coef) * dkxx / (2 * kxx**1.5)


def feature_gradients(model: GPModel, g: LabeledDigraph | FeatureVector) -> dict[int, float]:
    """Derivative of the posterior mean w.r.t. each feature count at ``g``.

    Covers every training feature plus any feature present in ``g``; a
    feature absent from all training graphs has derivative 0.
    """
    if model is None or model.alpha is None:
        raise ValueError("model is not fitted")
    fv = g if isinstance(g, FeatureVector) else extract_features(g, model.cfg.H, model.cfg.neighborhood, model.index)
    grads = dict(zip(model.columns, _gradient_vector(model, fv).tolist()))
    for f in fv.counts:
        grads.setdefault(f, 0.0)
    return grads


def _weighted_moments(model: GPModel) -> dict[int, tuple[float, float, int]]:
    """Per feature: (AG, EV, |G|) over training graphs containing it."""
    X = model.X
    linear = model.cfg.base is Base.DOT and not model.cfg.normalize
    if linear:
        const = dot_gradients(X, model.alpha)
        G = np.broadcast_to(const, X.shape)
    else:
        G = np.vstack([_gradient_vector(model, fv) for fv in model.features])
    out = {}
    for j, fid in enumerate(model.columns):
        rows = X[:, j] > 0
        m = int(rows.sum())
        if m == 0:
            continue
        ag, ev = count_weighted_moments(X[rows, j], G[rows, j])
        out[fid] = (ag, 0.0 if linear else ev, m)
    return out


def count_weighted_moments(counts: Sequence[float], grads: Sequence[float]) -> tuple[float, float]:
    """Weighted mean and variance of ``grads``.

    Graph n gets weight ``#{n' : counts[n'] == counts[n]} / len(counts)``, so
    graphs sharing a common count value dominate.
    """
    c, g = np.asarray(counts, float), np.asarray(grads, float)
    if len(c) == 0:
        raise ValueError("no graphs contain this feature")
    freq = Counter(c.tolist())
    w = np.array([freq[v] / len(c) for v in c.tolist()])
    ag = float(w @ g / w.sum())
    if len(c) == 1:
        return ag, 0.0
    eg2 = float(w @ (g * g) / w.sum())
    return ag, max(eg2 - ag * ag, 0.0)


def averaged_gradient(model: GPModel) -> dict[int, float]:
    """Occurrence-frequency-weighted mean derivative per training feature."""
    return {f: v[0] for f, v in _weighted_moments(model).items()}


def empirical_variance(model: GPModel) -> dict[int, float]:
    """Weighted variance of the derivative per training feature, floored at 0."""
    return {f: v[1] for f, v in _weighted_moments(model).items()}


def motif_scores(model: GPModel) -> list[MotifScore]:
    out = []
    for fid, (ag, ev, m) in _weighted_moments(model).items():
        out.append(
            MotifScore(fid, decode_feature(fid, model.index), model.index.level_of[fid], ag, ev, m, motif_score(ag, ev))
        )
    return out


def _rank_key(s: MotifScore) -> tuple[float, int, str]:
    return (-float(f"{s.score:.10g}"), s.level, s.decoded)


def split_quantiles(scores: Sequence[MotifScore], quantile: float) -> tuple[list[MotifScore], list[MotifScore]]:
    """Top and bottom ``quantile`` of ``scores`` by score.

    Scores agreeing to 10 significant digits count as tied; ties are broken
    by (level, subtree string), which does not depend on training order.
    """
    if not 0 < quantile <= 0.5:
        raise ValueError("quantile must lie in (0, 0.5]")
    ranked = sorted(scores, key=_rank_key)
    n = len(ranked)
    k = math.ceil(quantile * n)
    good = ranked[:k]
    bad = ranked[max(k, n - k):]
    return good, bad


def rank_motifs(
    model: GPModel, min_occurrences: int = 10, quantile: float = 0.25
) -> tuple[list[MotifScore], list[MotifScore]]:
    """(good, bad) motifs among features seen in at least ``min_occurrences`` graphs."""
    kept = [s for s in motif_scores(model) if s.occurrences >= min_occurrences]
    return split_quantiles(kept, quantile)


def motif_match(g: LabeledDigraph, motif_ids: Iterable[int], index: FeatureIndex, cfg: KernelConfig) -> int:
    """Number of the given motifs present in ``g``."""
    motif_ids = set(motif_ids)
    for m in motif_ids:
        if m not in index:
            raise KernelError(f"unknown motif id {m}")
    fv = extract_features(g, cfg.H, cfg.neighborhood, index)
    return sum(1 for m in motif_ids if fv.counts.get(m, 0) > 0)


# -- motif JSON --------------------------------------------------------------


@dataclass(frozen=True)
class MotifSet:
    """Scored motifs detached from any particular feature index."""

    H: int
    mode: str
    motifs: tuple[MotifScore, ...]

    def to_dict(self) -> dict:
        return {"H": self.H, "mode": self.mode, "motifs": [m.to_dict() for m in self.motifs]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> MotifSet:
        motifs = []
        for i, m in enumerate(d["motifs"]):
            try:
                level = m.get("level")
                if level is None:
                    level = _infer_level(m["subtree"])
                motifs.append(
                    MotifScore(
                        int(m["id"]), str(m["subtree"]), int(level), float(m["ag"]), float(m["ev"]),
                        int(m["occurrences"]), float(m["score"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"motifs[{i}]: {exc}") from None
        return cls(int(d["H"]), str(d["mode"]), tuple(motifs))

    @classmethod
    def load(cls, path) -> MotifSet:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def ids_in(self, index: FeatureIndex) -> dict[int, MotifScore]:
        """Map motifs onto ``index`` (adding unseen patterns)."""
        return {encode_subtree(m.decoded, m.level, index): m for m in self.motifs}


def _infer_level(subtree: str) -> int:
    from .wl import _depth, parse_subtree

    return _depth(parse_subtree(subtree))


def export_motifs(model: GPModel, scores: Sequence[MotifScore]) -> MotifSet:
    return MotifSet(model.cfg.H, model.cfg.neighborhood.value, tuple(scores))


def merge_scores(
    past: Sequence[MotifScore], current: Sequence[MotifScore], min_occurrences: int
) -> list[MotifScore]:
    """Merge past-task and current-task scores keyed by (subtree, level).

    Shared motifs with enough current support get occurrence-weighted AG and
    EV; past motifs lacking current support keep their past scores; current
    motifs lacking support are dropped. ``feature_id`` is taken from the
    current entry when there is one.
    """
    cur = {(s.decoded, s.level): s for s in current}
    out = {}
    for p in past:
        c = cur.get((p.decoded, p.level))
        if c is None or c.occurrences < min_occurrences:
            out[(p.decoded, p.level)] = p
            continue
        n = p.occurrences + c.occurrences
        ag = (p.occurrences * p.ag + c.occurrences * c.ag) / n
        ev = (p.occurrences * p.ev + c.occurrences * c.ev) / n
        out[(p.decoded, p.level)] = MotifScore(c.feature_id, c.decoded, c.level, ag, ev, n, motif_score(ag, ev))
    for key, c in cur.items():
        if key not in out and c.occurrences >= min_occurrences:
            out[key] = c
    return list(out.values())
