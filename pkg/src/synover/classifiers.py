"""Classifiers trained on (oversampled) data.

* kernel-smoothing plug-in rule: predict 1 where the class-1 KDE strictly
  exceeds the class-0 KDE;
* KNN with a probability threshold (0.5 for the plain rule, the training prior
  for the balanced Bayes classifier);
* logistic regression with optional L1 penalty, fitted by proximal gradient.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit

from .data import LabeledDataset, partition_classes
from .density import KdeModel
from .neighbors import NeighborIndex
from .oversampling import BandwidthSpec, BandwidthError, psd_cholesky, sample_covariance


@dataclass(frozen=True, eq=False)
class PredictionSet:
    labels: np.ndarray
    scores: np.ndarray | None = None

    def __post_init__(self):
        if self.scores is not None and len(self.scores) != len(self.labels):
            raise ValueError("labels and scores lengths differ")


def _as_matrix(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, d) if d > 1 else X.reshape(-1, 1)
    if X.shape[1] != d:
        raise ValueError(f"expected {d} features, got {X.shape[1]}")
    return X


# ---------------------------------------------------------------- kernel smoothing

@dataclass(eq=False)
class KsPluginModel:
    class0_kde: KdeModel | None
    class1_kde: KdeModel | None
    bw0: BandwidthSpec | None
    bw1: BandwidthSpec | None
    d: int

    def log_densities(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = _as_matrix(X, self.d)
        neg = np.full(X.shape[0], -np.inf)
        f0 = self.class0_kde.log_evaluate(X) if self.class0_kde is not None else neg
        f1 = self.class1_kde.log_evaluate(X) if self.class1_kde is not None else neg
        return f0, f1

    def predict(self, X) -> PredictionSet:
        f0, f1 = self.log_densities(X)
        # strict inequality: equal densities (including both underflowing) go to class 0
        with np.errstate(invalid="ignore"):
            margin = f1 - f0
        labels = (f1 > f0).astype(np.int64)
        return PredictionSet(labels, margin)


def ks_scott_bandwidths(ds: LabeledDataset, rate_count: str = "n0", scale: float = 1.0):
    """Per-class Scott bandwidths S_j with S_j^2 = N^(-2/(d+4)) C_j.

    ``rate_count='n0'`` uses the majority count N = n0 for both classes (the
    augmented minority has n0 rows); ``'per_class'`` uses each class's own count.
    """
    view = partition_classes(ds)
    d = ds.d
    out = []
    for label, count in ((0, view.n0), (1, view.n1)):
        if count == 0:
            out.append(None)
            continue
        if count < 2:
            raise BandwidthError(f"class {label} has fewer than 2 points")
        C = sample_covariance(ds.class_features(label))
        N = view.n0 if rate_count == "n0" and view.n0 > 0 else count
        out.append(BandwidthSpec.matrix(scale * N ** (-1.0 / (d + 4)) * psd_cholesky(C)))
    return out[0], out[1]


def _strictly_pd(bw: BandwidthSpec, d: int) -> BandwidthSpec:
    if bw.kind == "scalar":
        return bw
    L = bw.factor_for(d)
    if np.all(np.abs(np.diag(L)) > 0):
        return bw
    C = L @ L.T
    jitter = 1e-12 * max(np.trace(C) / d, 1e-300)
    return BandwidthSpec.matrix(np.linalg.cholesky(C + jitter * np.eye(d)))


def fit_ks_plugin(ds: LabeledDataset, bw0: BandwidthSpec | None = None, bw1: BandwidthSpec | None = None,
                  rate_count: str = "n0") -> KsPluginModel:
    view = partition_classes(ds)
    if view.n0 == 0 and view.n1 == 0:
        raise ValueError("kernel plug-in rule needs at least one nonempty class")
    if (bw0 is None and view.n0) or (bw1 is None and view.n1):
        s0, s1 = ks_scott_bandwidths(ds, rate_count=rate_count)
        bw0 = bw0 if bw0 is not None else s0
        bw1 = bw1 if bw1 is not None else s1
    kde0 = KdeModel(ds.class_features(0), _strictly_pd(bw0, ds.d)) if view.n0 else None
    kde1 = KdeModel(ds.class_features(1), _strictly_pd(bw1, ds.d)) if view.n1 else None
    return KsPluginModel(kde0, kde1, bw0, bw1, ds.d)


# ---------------------------------------------------------------- nearest neighbors

def sqrt_n_k(n: int) -> int:
    """sqrt(n) rounded to the nearest odd integer >= 1."""
    r = np.sqrt(n)
    k = 2 * int(np.floor((r - 1) / 2 + 0.5)) + 1
    return max(k, 1)


@dataclass(eq=False)
class KnnModel:
    index: NeighborIndex
    labels: np.ndarray
    K: int
    threshold: float = 0.5

    def eta(self, X) -> np.ndarray:
        X = _as_matrix(X, self.index.points.shape[1])
        idx, _ = self.index.query(X, self.K)
        return self.labels[idx].mean(axis=1)

    def predict(self, X) -> PredictionSet:
        eta = self.eta(X)
        return PredictionSet((eta > self.threshold).astype(np.int64), eta)


def fit_knn(ds: LabeledDataset, K: int, threshold: float = 0.5) -> KnnModel:
    if not 1 <= K <= ds.n:
        raise ValueError(f"K={K} out of range [1, {ds.n}]")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return KnnModel(NeighborIndex(ds.features), ds.labels.copy(), int(K), float(threshold))


def fit_bbc(ds: LabeledDataset, K: int) -> KnnModel:
    """Balanced Bayes classifier: KNN estimate of eta thresholded at the training prior n1/n."""
    return fit_knn(ds, K, threshold=partition_classes(ds).p_hat)


def knn_eta(model: KnnModel, x) -> np.ndarray:
    return model.eta(x)


def knn_eta_path(index: NeighborIndex, labels: np.ndarray, X, K_values) -> np.ndarray:
    """eta(x) for several K from a single neighbor query; rows follow ``K_values``."""
    K_values = np.asarray(K_values, dtype=np.int64)
    idx, _ = index.query(X, int(K_values.max()))
    csum = np.cumsum(labels[idx], axis=1)
    return csum[:, K_values - 1].T / K_values[:, None]


# ---------------------------------------------------------------- logistic regression

@dataclass(eq=False)
class LinearModel:
    weights: np.ndarray
    intercept: float
    l1_penalty: float = 0.0
    fit_diagnostics: dict = field(default_factory=dict)

    def decision_function(self, X) -> np.ndarray:
        X = _as_matrix(X, self.weights.size)
        return X @ self.weights + self.intercept

    def predict(self, X) -> PredictionSet:
        margin = self.decision_function(X)
        return PredictionSet((margin > 0).astype(np.int64), margin)


def logistic_loss(theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Mean logistic loss; theta = (weights..., intercept)."""
    z = X @ theta[:-1] + theta[-1]
    s = 2.0 * y - 1.0
    return float(-log_expit(s * z).mean())


def logistic_grad(theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = X @ theta[:-1] + theta[-1]
    r = (expit(z) - y) / X.shape[0]
    return np.append(X.T @ r, r.sum())


def _soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def fit_logistic(ds: LabeledDataset, l1_penalty: float = 0.0, max_iters: int = 5000,
                 tolerance: float = 1e-10) -> LinearModel:
    """Minimize mean logistic loss + l1_penalty * ||w||_1 (intercept unpenalized).

    Accelerated proximal gradient (FISTA with restart) and backtracking on the
    step size; stops once the relative objective decrease of an iteration falls
    below ``tolerance``.
    """
    if ds.n == 0:
        raise ValueError("cannot fit on an empty dataset")
    if l1_penalty < 0:
        raise ValueError("l1_penalty must be >= 0")
    X, y = ds.features, ds.labels.astype(float)
    d = X.shape[1]

    def objective(th):
        return logistic_loss(th, X, y) + l1_penalty * np.abs(th[:-1]).sum()

    def prox(th, step):
        out = th.copy()
        out[:-1] = _soft_threshold(th[:-1], step * l1_penalty)
        return out

    theta = np.zeros(d + 1)
    p = np.clip(y.mean(), 1e-12, 1 - 1e-12)
    theta[-1] = np.log(p / (1 - p))
    # Lipschitz bound of the smooth part: ||[X 1]||_2^2 / (4n)
    lip = (np.linalg.norm(np.column_stack([X, np.ones(ds.n)]), 2) ** 2) / (4 * ds.n)
    step = 1.0 / max(lip, 1e-12)
    f_prev = objective(theta)
    momentum_point, t = theta.copy(), 1.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        g = logistic_grad(momentum_point, X, y)
        f_mp = logistic_loss(momentum_point, X, y)
        while True:
            cand = prox(momentum_point - step * g, step)
            delta = cand - momentum_point
            if logistic_loss(cand, X, y) <= f_mp + g @ delta + (delta @ delta) / (2 * step) + 1e-15:
                break
            step *= 0.5
        f_new = objective(cand)
        if f_new > f_prev:
            if t == 1.0:
                # plain proximal step from the iterate made no progress: round-off floor
                converged = True
                break
            # restart momentum from the last iterate
            momentum_point, t = theta.copy(), 1.0
            continue
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        momentum_point = cand + ((t - 1) / t_next) * (cand - theta)
        rel = (f_prev - f_new) / max(abs(f_prev), 1e-300)
        theta, t, f_prev = cand, t_next, f_new
        if rel < tolerance and np.max(np.abs(delta)) < np.sqrt(tolerance):
            converged = True
            break
    diag = {"objective": f_prev, "iterations": it, "converged": converged}
    return LinearModel(theta[:-1].copy(), float(theta[-1]), float(l1_penalty), diag)


def predict_linear(model: LinearModel, X) -> PredictionSet:
    return model.predict(X)


def predict(model, X) -> PredictionSet:
    return model.predict(X)


# ---------------------------------------------------------------- persistence

def model_to_dict(model) -> dict:
    if isinstance(model, LinearModel):
        return {"type": "linear", "weights": model.weights.tolist(), "intercept": model.intercept,
                "l1_penalty": model.l1_penalty, "fit_diagnostics": model.fit_diagnostics}
    if isinstance(model, KnnModel):
        return {"type": "knn", "K": model.K, "threshold": model.threshold,
                "features": model.index.points.tolist(), "labels": model.labels.tolist()}
    if isinstance(model, KsPluginModel):
        def part(kde, bw):
            if kde is None:
                return None
            return {"points": kde.points.tolist(), "bandwidth": bw.to_dict()}
        return {"type": "ks", "d": model.d, "class0": part(model.class0_kde, model.bw0),
                "class1": part(model.class1_kde, model.bw1)}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(obj: dict):
    kind = obj["type"]
    if kind == "linear":
        return LinearModel(np.asarray(obj["weights"], dtype=float), float(obj["intercept"]),
                           float(obj.get("l1_penalty", 0.0)), obj.get("fit_diagnostics", {}))
    if kind == "knn":
        X = np.asarray(obj["features"], dtype=float)
        return KnnModel(NeighborIndex(X), np.asarray(obj["labels"], dtype=np.int64), int(obj["K"]),
                        float(obj["threshold"]))
    if kind == "ks":
        d = int(obj["d"])
        parts = []
        for key in ("class0", "class1"):
            p = obj[key]
            if p is None:
                parts.append((None, None))
            else:
                bw = BandwidthSpec.from_dict(p["bandwidth"])
                parts.append((KdeModel(np.asarray(p["points"]).reshape(-1, d), _strictly_pd(bw, d)), bw))
        return KsPluginModel(parts[0][0], parts[1][0], parts[0][1], parts[1][1], d)
    raise ValueError(f"unknown model type {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))
