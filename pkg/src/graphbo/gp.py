"""Gaussian-process regression over graphs with a WL kernel.

Targets are validation errors. They are modelled as
``standardize(log(max(err, eps)))`` with a zero prior mean; the WL depth H
and the noise variance are chosen by exact marginal likelihood over a
discrete grid.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .graph import LabeledDigraph
from .wl import (
    Base,
    FeatureIndex,
    FeatureVector,
    KernelConfig,
    Neighborhood,
    base_gram,
    extract_features,
    feature_matrix,
    normalize_gram,
    self_kernel,
)

log = logging.getLogger(__name__)

H_GRID = (0, 1, 2, 3)
NOISE_GRID = (1e-6, 1e-4, 1e-3, 1e-2, 1e-1)
JITTERS = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


class GPFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchGrid:
    H_values: tuple[int, ...] = H_GRID
    noise_values: tuple[float, ...] = NOISE_GRID
    bases: tuple[Base, ...] = (Base.DOT,)
    neighborhood: Neighborhood = Neighborhood.IN
    normalize: bool = False


@dataclass(frozen=True)
class TargetTransform:
    mean: float
    std: float
    epsilon: float = 1e-6

    @classmethod
    def fit(cls, errors: Sequence[float], epsilon: float = 1e-6) -> TargetTransform:
        z = np.log(np.maximum(np.asarray(errors, float), epsilon))
        std = float(z.std())
        return cls(float(z.mean()), std if std > 0 else 1.0, epsilon)

    def forward(self, errors) -> np.ndarray:
        return (np.log(np.maximum(np.asarray(errors, float), self.epsilon)) - self.mean) / self.std

    def inverse(self, t) -> np.ndarray:
        return np.exp(self.std * np.asarray(t, float) + self.mean)


def cholesky_with_jitter(A: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A``, escalating diagonal jitter up to 1e-4."""
    eye = np.eye(A.shape[0])
    for jitter in JITTERS:
        try:
            return linalg.cholesky(A + jitter * eye, lower=True), jitter
        except linalg.LinAlgError:
            continue
    raise GPFitError("kernel matrix is not positive definite even with 1e-4 jitter")


def log_marginal_likelihood(K: np.ndarray, y: np.ndarray, noise: float) -> float:
    """Exact GP log evidence of ``y`` under covariance ``K + noise*I``."""
    L, _ = cholesky_with_jitter(K + noise * np.eye(len(y)))
    return _lml(L, y)


def _lml(L: np.ndarray, y: np.ndarray) -> float:
    a = linalg.cho_solve((L, True), y)
    n = len(y)
    return float(-0.5 * y @ a - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi))


def gp_posterior(
    K: np.ndarray, K_star: np.ndarray, k_ss: np.ndarray, y: np.ndarray, noise: float
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent variance at test points (rows of ``K_star``)."""
    L, _ = cholesky_with_jitter(K + noise * np.eye(len(y)))
    alpha = linalg.cho_solve((L, True), y)
    v = linalg.solve_triangular(L, K_star.T, lower=True)
    return K_star @ alpha, np.maximum(k_ss - (v * v).sum(0), 0.0)


@dataclass(frozen=True)
class Prediction:
    mean: np.ndarray
    var: np.ndarray
    error_mean: np.ndarray
    error_var: np.ndarray

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.var)


@dataclass
class GPModel:
    graphs: list[LabeledDigraph]
    index: FeatureIndex
    features: list[FeatureVector]
    cfg: KernelConfig
    noise: float
    chol: np.ndarray
    alpha: np.ndarray
    transform: TargetTransform
    raw_targets: np.ndarray
    targets: np.ndarray
    lml: float
    columns: list[int]
    X: np.ndarray
    train_diag: np.ndarray
    grid_lml: dict[tuple, float] = field(default_factory=dict)

    @property
    def n_train(self) -> int:
        return len(self.graphs)

    def summary(self) -> dict:
        return {
            "H": self.cfg.H,
            "noise": self.noise,
            "lml": self.lml,
            "n_train": self.n_train,
            "base": self.cfg.base.value,
            "neighborhood": self.cfg.neighborhood.value,
            "normalize": self.cfg.normalize,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def _level_grams(X: np.ndarray, levels: np.ndarray, H_max: int, base: Base) -> list[np.ndarray]:
    """Cumulative Gram matrices for H = 0..H_max."""
    out, K = [], np.zeros((X.shape[0], X.shape[0]))
    for h in range(H_max + 1):
        cols = levels == h
        K = K + base_gram(X[:, cols], X[:, cols], base)
        out.append(K)
    return out


def fit(
    graphs: Sequence[LabeledDigraph],
    val_errors: Sequence[float],
    grid: SearchGrid = SearchGrid(),
    epsilon: float = 1e-6,
) -> GPModel:
    """Fit the surrogate, picking (H, noise, base) by maximum log evidence.

    Grid points are visited by base, then H, then noise ascending; only a
    strictly larger evidence replaces the incumbent, so ties go to the
    smaller H and then the smaller noise.
    """
    graphs = list(graphs)
    errs = np.asarray(val_errors, float)
    if len(graphs) < 2 or len(errs) != len(graphs):
        raise ValueError("need at least two (graph, error) observations of equal length")
    if not np.all(np.isfinite(errs)):
        raise GPFitError("non-finite targets")
    if np.any((errs < 0) | (errs > 1)):
        raise ValueError("validation errors must lie in [0, 1]")
    transform = TargetTransform.fit(errs, epsilon)
    y = transform.forward(errs)

    H_max = max(grid.H_values)
    index = FeatureIndex()
    full = [extract_features(g, H_max, grid.neighborhood, index) for g in graphs]
    columns = sorted(index.reverse)
    levels = np.array([index.level_of[f] for f in columns])
    X = feature_matrix(full, columns)

    best = None
    scores: dict[tuple, float] = {}
    n = len(y)
    for base in grid.bases:
        cumulative = _level_grams(X, levels, H_max, base)
        for H in sorted(grid.H_values):
            K = cumulative[H]
            if grid.normalize:
                d = np.diag(K).copy()
                K = normalize_gram(K, d, d)
            for noise in sorted(grid.noise_values):
                try:
                    L, _ = cholesky_with_jitter(K + noise * np.eye(n))
                except GPFitError:
                    continue
                lml = _lml(L, y)
                scores[(base.value, H, noise)] = lml
                if best is None or lml > best[0]:
                    best = (lml, base, H, noise, L, K)
    if best is None:
        raise GPFitError("no grid point produced a factorizable kernel matrix")
    lml, base, H, noise, L, K = best
    cfg = KernelConfig(H, base, grid.neighborhood, grid.normalize)
    keep = levels <= H
    feats = [fv.restrict(H, index) for fv in full]
    Xh = X[:, keep]
    return GPModel(
        graphs=graphs,
        index=index,
        features=feats,
        cfg=cfg,
        noise=noise,
        chol=L,
        alpha=linalg.cho_solve((L, True), y),
        transform=transform,
        raw_targets=errs,
        targets=y,
        lml=lml,
        columns=[c for c, k in zip(columns, keep) if k],
        X=Xh,
        train_diag=np.array([self_kernel(f, base) for f in feats]),
        grid_lml=scores,
    )


def fit_fixed(
    graphs: Sequence[LabeledDigraph], val_errors: Sequence[float], cfg: KernelConfig, noise: float
) -> GPModel:
    """Fit with a single fixed kernel configuration and noise level."""
    grid = SearchGrid((cfg.H,), (noise,), (cfg.base,), cfg.neighborhood, cfg.normalize)
    return fit(graphs, val_errors, grid)


def _test_kernels(model: GPModel, feats: Sequence[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    Xs = feature_matrix(feats, model.columns)
    K_star = base_gram(Xs, model.X, model.cfg.base)
    k_ss = np.array([self_kernel(f, model.cfg.base) for f in feats])
    if model.cfg.normalize:
        K_star = normalize_gram(K_star, k_ss, model.train_diag)
        k_ss = (k_ss > 0).astype(float)
    return K_star, k_ss


def predict_features(model: GPModel, feats: Sequence[FeatureVector]) -> Prediction:
    K_star, k_ss = _test_kernels(model, feats)
    mean = K_star @ model.alpha
    v = linalg.solve_triangular(model.chol, K_star.T, lower=True)
    var = np.maximum(k_ss - (v * v).sum(0), 0.0)
    # log-normal moments in error space
    m = model.transform.std * mean + model.transform.mean
    s2 = model.transform.std**2 * var
    return Prediction(mean, var, np.exp(m), (np.exp(s2) - 1.0) * np.exp(2 * m + s2))


def featurize(model: GPModel, graphs: Sequence[LabeledDigraph]) -> list[FeatureVector]:
    return [extract_features(g, model.cfg.H, model.cfg.neighborhood, model.index) for g in graphs]


def predict(model: GPModel, graphs: Sequence[LabeledDigraph]) -> Prediction:
    """Posterior mean/variance in transformed space plus error-space moments.

    ``error_mean`` is ``exp(std * mean + offset)``, the median of the implied
    log-normal; ``error_var`` is that log-normal's variance.
    """
    return predict_features(model, featurize(model, graphs))


def posterior_mean_counts(model: GPModel, counts: dict[int, float]) -> float:
    """Posterior mean at an arbitrary (possibly non-integer) count vector."""
    fv = FeatureVector(dict(counts), model.cfg.H, model.cfg.neighborhood, model.index.token)
    return float(predict_features(model, [fv]).mean[0])


def best_observation(graphs: Sequence[LabeledDigraph], errors: Sequence[float]) -> tuple[LabeledDigraph, float]:
    """Lowest raw validation error; earliest wins ties."""
    if len(graphs) == 0:
        raise ValueError("no observations")
    i = int(np.argmin(np.asarray(errors, float)))
    return graphs[i], float(errors[i])


def incumbent(model: GPModel) -> tuple[LabeledDigraph, float]:
    return best_observation(model.graphs, model.raw_targets)
