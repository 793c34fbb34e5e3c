"""Balanced risk, cross-validation of K with in-fold oversampling, and the
concentration audit of synthetic-sample means."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .classifiers import PredictionSet, knn_eta_path
from .data import LabeledDataset, balance_by_undersampling, partition_classes
from .neighbors import NeighborIndex
from .oversampling import OversamplerConfig, generate as generate_synthetic, oversample_to_balance
from .rng import RngStream

AM = "am"
OVERSAMPLED_ERROR = "oversampled_error"


@dataclass(frozen=True)
class RiskReport:
    err_class1: float
    err_class0: float
    beta: float
    risk: float


def am_risk(pred, truth, beta: float = 0.5) -> RiskReport:
    """beta * P(pred != 1 | y = 1) + (1 - beta) * P(pred != 0 | y = 0)."""
    labels = pred.labels if isinstance(pred, PredictionSet) else pred
    labels = np.asarray(labels).astype(np.int64)
    truth = np.asarray(truth).astype(np.int64)
    if labels.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    pos, neg = truth == 1, truth == 0
    if not pos.any() or not neg.any():
        raise ValueError("both classes must be present in the truth labels")
    e1 = float(np.mean(labels[pos] != 1))
    e0 = float(np.mean(labels[neg] != 0))
    return RiskReport(e1, e0, beta, beta * e1 + (1 - beta) * e0)


def stratified_folds(labels, folds: int, rng: RngStream) -> list[np.ndarray]:
    """Test-fold index arrays; each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    assignment = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for label in (1, 0):
        idx = np.flatnonzero(labels == label)
        idx = idx[rng.generator.permutation(idx.size)]
        # continue dealing where the previous class stopped so fold sizes stay within one row
        assignment[idx] = (offset + np.arange(idx.size)) % folds
        offset = (offset + idx.size) % folds
    return [np.flatnonzero(assignment == f) for f in range(folds)]


def default_k_grid(n: int, size: int = 15) -> list[int]:
    """About ``size`` odd values geometrically spaced over [1, n/2]."""
    top = max(1.0, n / 2)
    raw = np.geomspace(1.0, top, size)
    odd = {max(1, 2 * int(np.floor((v - 1) / 2 + 0.5)) + 1) for v in raw}
    return sorted(k for k in odd if k <= max(1, int(top)) or k == 1)


@dataclass
class CvResult:
    grid: list[int]
    mean_cv_risk: list[float]
    chosen_K: int
    fold_count: int

    def to_rows(self) -> list[dict]:
        return [{"K": k, "mean_cv_risk": r, "chosen": int(k == self.chosen_K)}
                for k, r in zip(self.grid, self.mean_cv_risk)]


def _select(grid, risks, folds) -> CvResult:
    risks = [float(r) for r in risks]
    best = min(range(len(grid)), key=lambda i: (risks[i], grid[i]))
    return CvResult(list(map(int, grid)), risks, int(grid[best]), folds)


def _check_cv_input(ds: LabeledDataset, K_grid, folds: int):
    view = partition_classes(ds)
    if view.n1 < folds or view.n0 < folds:
        raise ValueError(f"cannot stratify {folds} folds with class counts n1={view.n1}, n0={view.n0}")
    if len(K_grid) == 0:
        raise ValueError("empty K grid")


def cross_validate_K(ds: LabeledDataset, oversampler: OversamplerConfig, K_grid, folds: int = 5,
                     rng: RngStream | None = None, metric: str = AM) -> CvResult:
    """Stratified CV of the KNN neighbor count with oversampling inside each training part.

    ``metric='am'`` scores AM-risk on the untouched test fold; ``'oversampled_error'``
    balances the test fold with the same oversampler and scores plain error.
    """
    rng = rng if rng is not None else RngStream(0)
    _check_cv_input(ds, K_grid, folds)
    grid = np.asarray(K_grid, dtype=np.int64)
    test_sets = stratified_folds(ds.labels, folds, rng.substream(0))
    totals = np.zeros(grid.size)
    for f, test_idx in enumerate(test_sets):
        train_idx = np.setdiff1d(np.arange(ds.n), test_idx)
        train = oversample_to_balance(ds.take(train_idx), oversampler, rng.substream(1, f))
        test = ds.take(test_idx)
        if metric == OVERSAMPLED_ERROR:
            test = oversample_to_balance(test, oversampler, rng.substream(2, f))
        Ks = np.minimum(grid, train.n)
        eta = knn_eta_path(NeighborIndex(train.features), train.labels, test.features, Ks)
        for j, e in enumerate(eta):
            pred = (e > 0.5).astype(np.int64)
            if metric == OVERSAMPLED_ERROR:
                totals[j] += float(np.mean(pred != test.labels))
            else:
                totals[j] += am_risk(pred, test.labels).risk
    return _select(grid, totals / folds, folds)


def cross_validate_bbc(ds: LabeledDataset, K_grid, folds: int = 5, rng: RngStream | None = None) -> CvResult:
    """CV of the balanced Bayes classifier: threshold at the training-fold prior,
    AM-risk measured on the test fold after undersampling its majority class."""
    rng = rng if rng is not None else RngStream(0)
    _check_cv_input(ds, K_grid, folds)
    grid = np.asarray(K_grid, dtype=np.int64)
    test_sets = stratified_folds(ds.labels, folds, rng.substream(0))
    totals = np.zeros(grid.size)
    for f, test_idx in enumerate(test_sets):
        train = ds.take(np.setdiff1d(np.arange(ds.n), test_idx))
        test = balance_by_undersampling(ds.take(test_idx), rng.substream(1, f))
        threshold = partition_classes(train).p_hat
        Ks = np.minimum(grid, train.n)
        eta = knn_eta_path(NeighborIndex(train.features), train.labels, test.features, Ks)
        for j, e in enumerate(eta):
            totals[j] += am_risk((e > threshold).astype(np.int64), test.labels).risk
    return _select(grid, totals / folds, folds)


# ---------------------------------------------------------------- concentration audit

@dataclass(frozen=True, eq=False)
class CosineFamily:
    """Test functions x -> cos(w^T x + b), one per row of ``W``."""

    W: np.ndarray
    b: np.ndarray

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.cos(X @ self.W.T + self.b)

    def __len__(self) -> int:
        return self.W.shape[0]

    def means(self, X) -> np.ndarray:
        # blockwise to keep memory flat for 10^5-row reference samples
        X = np.asarray(X, dtype=float)
        acc = np.zeros(len(self))
        for s in range(0, X.shape[0], 20_000):
            acc += self(X[s:s + 20_000]).sum(axis=0)
        return acc / X.shape[0]


def load_test_functions(d: int = 2, version: str = "v1") -> CosineFamily:
    text = resources.files("synover").joinpath(f"resources/test_functions_{version}.json").read_text()
    spec = json.loads(text)[f"d{d}"]
    return CosineFamily(np.asarray(spec["w"], dtype=float), np.asarray(spec["b"], dtype=float))


@dataclass
class AuditReport:
    sup_discrepancy: float
    per_function: list[float]
    config: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        return {"sup_discrepancy": self.sup_discrepancy, **self.config}


def concentration_audit(minority_sampler: Callable[[RngStream, int], np.ndarray], oversampler: OversamplerConfig,
                        n1: int, m: int, test_functions, reference_size: int = 100_000, replications: int = 50,
                        rng: RngStream | None = None, reference: np.ndarray | None = None,
                        synthesize: Callable | None = None) -> list[AuditReport]:
    """sup over the test family of |synthetic mean - population mean|, once per replication.

    The population mean is estimated from ``reference_size`` fresh minority draws
    (or from ``reference`` when given).  ``synthesize(minority, rng)`` replaces the
    oversampler when supplied.
    """
    if test_functions is None or len(test_functions) == 0:
        raise ValueError("empty test-function family")
    rng = rng if rng is not None else RngStream(0)
    if reference is None:
        reference = minority_sampler(rng.substream(0), reference_size)
    ref_means = test_functions.means(reference)
    config = {"method": oversampler.method if oversampler else "custom", "n1": n1, "m": m,
              "k": oversampler.k if oversampler else None, "scale": oversampler.scale if oversampler else None}
    reports = []
    for r in range(replications):
        rep_rng = rng.substream(1, r)
        minority = minority_sampler(rep_rng.substream(0), n1)
        if synthesize is not None:
            synthetic = synthesize(minority, rep_rng.substream(1))
        else:
            synthetic = generate_synthetic(minority, oversampler, m, rep_rng.substream(1)).synthetic
        per = np.abs(test_functions.means(synthetic) - ref_means)
        reports.append(AuditReport(float(per.max()), per.tolist(), {**config, "replication": r}))
    return reports


def write_rows_csv(rows: list[dict], path) -> None:
    if not rows:
        Path(path).write_text("")
        return
    names = list(rows[0])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        w.writerows(rows)


def risk_to_dict(r: RiskReport) -> dict:
    return asdict(r)
