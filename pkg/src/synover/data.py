"""Dataset container, CSV ingestion, class partitioning, splits and scaling."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import RngStream


class DataError(ValueError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix plus binary labels.

    ``ids`` carries the originating row ids through splits and resampling so that
    leakage between training and validation data can be audited; synthetic rows
    get id -1.
    """

    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray | None = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[1] < 1:
            raise DataError("features must be an n x d matrix with d >= 1")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataError("labels length must equal the number of feature rows")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("every label must be 0 or 1")
        if not np.isfinite(X).all():
            raise DataError("features contain non-finite values")
        ids = np.arange(X.shape[0]) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (X.shape[0],):
            raise DataError("ids length must equal the number of rows")
        object.__setattr__(self, "features", _readonly(X))
        object.__setattr__(self, "labels", _readonly(y.astype(np.int64)))
        object.__setattr__(self, "ids", _readonly(ids))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(self.features[rows], self.labels[rows], self.ids[rows])

    def class_features(self, label: int) -> np.ndarray:
        return self.features[self.labels == label]


def concat(parts: list[LabeledDataset]) -> LabeledDataset:
    return LabeledDataset(
        np.vstack([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
        np.concatenate([p.ids for p in parts]),
    )


@dataclass(frozen=True)
class ClassView:
    minority_indices: np.ndarray
    majority_indices: np.ndarray
    n1: int
    n0: int
    p_hat: float


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class ScalingParams:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    def apply(self, ds: LabeledDataset) -> LabeledDataset:
        # constant columns carry mean 0 / std 1 and so pass through unchanged
        return LabeledDataset((ds.features - self.mean) / self.std, ds.labels, ds.ids)


def round_half_up(x: float) -> int:
    # guards 0.1*900/0.9 = 100.00000000000001 style round-off
    return int(math.floor(x + 0.5 + 1e-9))


def load_csv(path, label_column=-1, has_header: bool = True) -> LabeledDataset:
    """Read a numeric CSV whose label column holds exactly two distinct values.

    ``label_column`` is a header name or a (possibly negative) column index.
    Two numeric labels map larger -> 1; two non-numeric labels map in sorted order.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    header = None
    if has_header and rows:
        header, rows = rows[0], rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(header) if header is not None else len(rows[0])
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None or label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not found")
        label_idx = header.index(label_column)
    else:
        label_idx = int(label_column)
        if not -width <= label_idx < width:
            raise DataError(f"{path}: label column index {label_idx} out of range")
        label_idx %= width

    raw_labels = []
    feats = np.empty((len(rows), width - 1))
    line_offset = 2 if header is not None else 1
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {i + line_offset} has {len(row)} columns, expected {width}")
        raw_labels.append(row[label_idx].strip())
        j_out = 0
        for j, cell in enumerate(row):
            if j == label_idx:
                continue
            try:
                feats[i, j_out] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric feature cell {cell!r} at row {i + line_offset}, column {j + 1}"
                ) from None
            j_out += 1

    labels = _map_labels(raw_labels, path)
    return LabeledDataset(feats, labels)


def _map_labels(raw: list[str], path) -> np.ndarray:
    values = sorted(set(raw))
    if len(values) > 2:
        raise DataError(f"{path}: non-binary labels {values[:5]}")
    try:
        numeric = {v: float(v) for v in values}
    except ValueError:
        numeric = None
    if numeric is not None:
        if set(numeric.values()) <= {0.0, 1.0}:
            return np.array([int(numeric[v]) for v in raw])
        positive = max(values, key=numeric.get)
    else:
        positive = values[-1]
    if len(values) == 1 and numeric is None:
        raise DataError(f"{path}: cannot map single non-numeric label {values[0]!r} to 0/1")
    return np.array([int(v == positive) for v in raw])


def save_csv(ds: LabeledDataset, path, extra_columns: dict[str, np.ndarray] | None = None) -> None:
    extra_columns = extra_columns or {}
    names = [f"x{j + 1}" for j in range(ds.d)] + ["label"] + list(extra_columns)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        cols = list(extra_columns.values())
        for i in range(ds.n):
            w.writerow([repr(float(v)) for v in ds.features[i]] + [int(ds.labels[i])] + [c[i] for c in cols])


def partition_classes(ds: LabeledDataset) -> ClassView:
    minority = np.flatnonzero(ds.labels == 1)
    majority = np.flatnonzero(ds.labels == 0)
    n1, n0 = minority.size, majority.size
    p_hat = n1 / ds.n if ds.n else 0.0
    return ClassView(minority, majority, n1, n0, p_hat)


def train_validation_split(ds: LabeledDataset, spec: SplitSpec, rng: RngStream):
    if ds.n < 2:
        raise DataError("need at least 2 rows to split")
    n_train = round_half_up(spec.train_fraction * ds.n)
    perm = rng.generator.permutation(ds.n)
    train = np.sort(perm[:n_train])
    valid = np.sort(perm[n_train:])
    return ds.take(train), ds.take(valid)


def minority_keep_count(n0: int, target_ratio: float) -> int:
    return round_half_up(target_ratio * n0 / (1.0 - target_ratio))


def subsample_minority(ds: LabeledDataset, target_ratio: float, rng: RngStream) -> LabeledDataset:
    """Downsample class 1 without replacement so that n1'/(n1'+n0) hits ``target_ratio``."""
    if not 0.0 < target_ratio < 1.0:
        raise DataError("target_ratio must lie in (0, 1)")
    view = partition_classes(ds)
    if view.n1 == 0 or view.n0 == 0:
        raise DataError("subsampling needs both classes present")
    keep = minority_keep_count(view.n0, target_ratio)
    if keep > view.n1:
        raise DataError(
            f"target ratio {target_ratio} not achievable by subsampling: needs {keep} minority rows, have {view.n1}"
        )
    kept = rng.generator.choice(view.minority_indices, size=keep, replace=False)
    rows = np.sort(np.concatenate([view.majority_indices, kept]))
    return ds.take(rows)


def balance_by_undersampling(ds: LabeledDataset, rng: RngStream) -> LabeledDataset:
    view = partition_classes(ds)
    if view.n1 == 0 or view.n0 == 0:
        raise DataError("cannot balance: a class is empty")
    size = min(view.n1, view.n0)
    if view.n0 > view.n1:
        keep_major = rng.generator.choice(view.majority_indices, size=size, replace=False)
        rows = np.concatenate([view.minority_indices, keep_major])
    else:
        keep_minor = rng.generator.choice(view.minority_indices, size=size, replace=False)
        rows = np.concatenate([keep_minor, view.majority_indices])
    return ds.take(np.sort(rows))


def fit_scaling(X: np.ndarray) -> ScalingParams:
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    constant = ~(std > 0)
    safe = np.where(constant, 1.0, std)
    mean = np.where(constant, 0.0, mean)
    return ScalingParams(mean, safe, constant)


def standardize(train: LabeledDataset, others: list[LabeledDataset] = ()):
    if train.n == 0:
        raise DataError("cannot standardize on an empty training set")
    params = fit_scaling(train.features)
    return params.apply(train), [params.apply(o) for o in others], params
