"""Experiment orchestration: replications over imbalance levels, paired methods,
hyperparameter sweeps and the real-data protocol.

Stream layout (all relative to the root seed):

* ``(level, rep)``        data stream D of a cell; D/0 trains, D/1 validates
* ``(level, rep)/2/j``    randomness of method j in that cell
* ``(CAL, round(p1*1e6))`` calibration of the generator at minority level p1
* ``(SPLIT, rep)``        real data: 70:30 split and validation balancing

Every method in a cell sees the same training and validation data.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import simgen
from .classifiers import fit_bbc, fit_knn, fit_ks_plugin, fit_logistic, sqrt_n_k
from .data import (DataError, LabeledDataset, SplitSpec, balance_by_undersampling, load_csv, partition_classes,
                   standardize, subsample_minority, train_validation_split)
from .evaluation import am_risk, cross_validate_bbc, cross_validate_K, default_k_grid, AM
from .oversampling import KDEO, PURE, SMOTE, OversamplerConfig, oversample_to_balance, effective_k
from .rng import EXP_RATE, RngStream

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
WORKERS_ENV = "SYNOVER_WORKERS"
CAL = 3233
SPLIT = 5737
VALIDATION_ID_OFFSET = 1_000_000_000
CLASSIFIERS = ("knn", "ks", "lr", "bbc")
ROW_FIELDS = ["method", "p1", "replication", "axis", "axis_value", "am_risk", "err_class1", "err_class0",
              "chosen", "clamped", "n_train", "n1_train", "error", "wall_time"]


@dataclass(frozen=True)
class MethodSpec:
    """One classifier, optionally trained after oversampling; ``cv`` tunes K by 5-fold CV."""

    id: str
    classifier: str
    oversampler: OversamplerConfig | None = None
    cv: bool = False
    K: int | None = None
    l1_penalty: float = 0.0
    cv_metric: str = AM
    cv_folds: int = 5

    def __post_init__(self):
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if self.classifier == "bbc" and self.oversampler is not None:
            raise ValueError("BBC reweights by threshold and does not oversample")
        if self.cv and self.classifier not in ("knn", "bbc"):
            raise ValueError("CV over K applies to knn and bbc only")

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.oversampler is not None:
            out["oversampler"] = {k: v for k, v in asdict(self.oversampler).items() if k != "bandwidth"}
        return out


def parse_method(obj) -> MethodSpec:
    """Accepts ``"knn+smote"``, ``"ks+kdeo"``, ``"knn+kdeo+cv"``, ``"bbc"``, ``"lr+kdeo"`` ... or a dict
    with keys id, classifier, oversampler, k, scale, mode, cv, K, l1_penalty."""
    if isinstance(obj, MethodSpec):
        return obj
    if isinstance(obj, str):
        obj = {"id": obj}
    obj = dict(obj)
    tokens = obj.get("id", "").lower().split("+") if obj.get("id") else []
    classifier = obj.get("classifier") or (tokens[0] if tokens else None)
    l1 = float(obj.get("l1_penalty", 0.0))
    if classifier == "lrlasso":
        classifier, l1 = "lr", float(obj.get("l1_penalty", 0.01))
    method = obj.get("oversampler")
    if isinstance(method, dict):
        over = OversamplerConfig(**method)
    else:
        if method is None:
            method = next((t for t in tokens[1:] if t in (SMOTE, KDEO)), None)
        over = None
        if method not in (None, "none"):
            over = OversamplerConfig(method=method, k=int(obj.get("k", 5)), scale=float(obj.get("scale", 1.0)),
                                     mode=obj.get("mode", PURE))
    cv = bool(obj.get("cv", "cv" in tokens[1:]))
    mid = obj.get("id") or "+".join([classifier] + ([over.method] if over else []) + (["cv"] if cv else []))
    return MethodSpec(mid, classifier, over, cv, obj.get("K"), l1, obj.get("cv_metric", AM),
                      int(obj.get("cv_folds", 5)))


@dataclass(frozen=True)
class ExperimentSpec:
    """``source`` is ``{"generator": {...}}`` or ``{"csv": path, "label_column": ..., ...}``.

    ``levels`` are minority proportions p1 (a 90:10 class ratio is level 0.10).
    """

    source: dict
    methods: tuple
    replications: int = 50
    levels: tuple = (0.10,)
    seed: int = 0
    mc_size: int = 1_000_000
    validation_size: int = 10_000
    calibration_cache: str | None = None
    output: str | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        object.__setattr__(self, "methods", tuple(parse_method(m) for m in self.methods))
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if any(not 0 < v < 1 for v in self.levels):
            raise ValueError("levels must lie in (0, 1)")
        ids = [m.id for m in self.methods]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate method ids: {ids}")
        if "generator" not in self.source and "csv" not in self.source:
            raise ValueError("source needs a 'generator' or 'csv' entry")
        if "csv" in self.source and not Path(self.source["csv"]).exists():
            raise FileNotFoundError(self.source["csv"])

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentSpec":
        obj = dict(obj)
        obj["methods"] = tuple(obj.get("methods", ()))
        obj["levels"] = tuple(obj.get("levels", (0.10,)))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = [m.to_dict() for m in self.methods]
        out["levels"] = list(self.levels)
        return out


def resolve_workers(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


# ---------------------------------------------------------------- per-cell work

def generator_spec(spec: ExperimentSpec, p1: float) -> simgen.GeneratorSpec:
    g = dict(spec.source["generator"])
    family = simgen.canonical_family(g["family"])
    d = int(g.get("d", 2 if family == "ex4" else 4))
    cal_rng = RngStream(spec.seed, (CAL, int(round(p1 * 1e6))))
    return simgen.calibrated_spec(family, p1, d=d, n=int(g.get("n", 1000)), mc_size=spec.mc_size, rng=cal_rng,
                                  cache_path=spec.calibration_cache,
                                  exp_convention=g.get("exp_convention", EXP_RATE))


def simulated_cell(spec: ExperimentSpec, gspec: simgen.GeneratorSpec, level_idx: int, rep: int):
    data_rng = RngStream(spec.seed, (level_idx, rep))
    train = simgen.generate(gspec, data_rng.substream(0))
    valid = simgen.balanced_validation_set(gspec, data_rng.substream(1), n_raw=spec.validation_size)
    valid = LabeledDataset(valid.features, valid.labels, valid.ids + VALIDATION_ID_OFFSET)
    return train, valid


def run_method(method: MethodSpec, train: LabeledDataset, valid: LabeledDataset, rng: RngStream):
    """Fit one method on ``train`` and score it on ``valid``. Returns (RiskReport, chosen, clamped)."""
    view = partition_classes(train)
    chosen = ""
    clamped = False
    over = method.oversampler
    if over is not None and over.method == SMOTE:
        clamped = effective_k(over.k, view.n1)[1]
    K = method.K if method.K is not None else sqrt_n_k(train.n)

    if method.classifier == "bbc":
        if method.cv:
            K = cross_validate_bbc(train, default_k_grid(train.n), method.cv_folds, rng.substream(1)).chosen_K
            chosen = K
        model = fit_bbc(train, min(K, train.n))
        return am_risk(model.predict(valid.features), valid.labels), chosen, clamped

    if method.cv:
        cv = cross_validate_K(train, over, default_k_grid(train.n), method.cv_folds, rng.substream(1),
                              metric=method.cv_metric)
        K = chosen = cv.chosen_K
    fit_set = oversample_to_balance(train, over, rng.substream(0)) if over is not None else train
    if method.classifier == "knn":
        model = fit_knn(fit_set, min(K, fit_set.n))
    elif method.classifier == "ks":
        model = fit_ks_plugin(fit_set, rate_count="n0" if over is not None else "per_class")
    else:
        model = fit_logistic(fit_set, l1_penalty=method.l1_penalty)
    if over is not None and not method.cv:
        chosen = over.k if over.method == SMOTE else over.scale
    return am_risk(model.predict(valid.features), valid.labels), chosen, clamped


def _score_cell(methods, train, valid, data_rng: RngStream, p1: float, rep: int) -> list[dict]:
    rows = []
    view = partition_classes(train)
    for j, method in enumerate(methods):
        row = {"method": method.id, "p1": p1, "replication": rep, "n_train": train.n, "n1_train": view.n1,
               "error": "", "am_risk": "", "err_class1": "", "err_class0": "", "chosen": "", "clamped": 0}
        start = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                risk, chosen, clamped = run_method(method, train, valid, data_rng.substream(2, j))
            row.update(am_risk=risk.risk, err_class1=risk.err_class1, err_class0=risk.err_class0,
                       chosen=chosen, clamped=int(clamped))
        except Exception as exc:  # recorded per cell; the run continues
            row["error"] = f"{type(exc).__name__}: {exc}"
        row["wall_time"] = time.perf_counter() - start
        rows.append(row)
    return rows


def _simulated_job(args) -> list[dict]:
    spec, gspec, level_idx, p1, rep = args
    data_rng = RngStream(spec.seed, (level_idx, rep))
    try:
        train, valid = simulated_cell(spec, gspec, level_idx, rep)
    except Exception as exc:
        return [_failed_row(m.id, p1, rep, exc) for m in spec.methods]
    return _score_cell(spec.methods, train, valid, data_rng, p1, rep)


def _failed_row(method_id, p1, rep, exc) -> dict:
    return {"method": method_id, "p1": p1, "replication": rep, "n_train": "", "n1_train": "", "am_risk": "",
            "err_class1": "", "err_class0": "", "chosen": "", "clamped": 0,
            "error": f"{type(exc).__name__}: {exc}", "wall_time": 0.0}


def real_data_cell(spec: ExperimentSpec, full: LabeledDataset, level_idx: int, p1: float, rep: int):
    """70:30 split, optional standardization fitted on train, minority subsampling of train to p1,
    validation balanced by undersampling.  Validation rows are split off first."""
    src = spec.source
    split_rng = RngStream(spec.seed, (SPLIT, rep))
    train, valid = train_validation_split(full, SplitSpec(float(src.get("train_fraction", 0.7)), spec.seed),
                                          split_rng.substream(0))
    valid = balance_by_undersampling(valid, split_rng.substream(1))
    if src.get("standardize", True):
        train, (valid,), _ = standardize(train, [valid])
    data_rng = RngStream(spec.seed, (level_idx, rep))
    view = partition_classes(train)
    if view.n1 / train.n > p1 + 1e-12:
        train = subsample_minority(train, p1, data_rng.substream(0))
    elif view.n1 / train.n < p1 - 1e-12:
        raise DataError(f"level {p1} not achievable by subsampling (train minority share {view.n1 / train.n:.4f})")
    return train, valid


def _real_job(args) -> list[dict]:
    spec, full, level_idx, p1, rep = args
    data_rng = RngStream(spec.seed, (level_idx, rep))
    try:
        train, valid = real_data_cell(spec, full, level_idx, p1, rep)
    except Exception as exc:
        log.warning("level %s replication %d skipped: %s", p1, rep, exc)
        return [_failed_row(m.id, p1, rep, exc) for m in spec.methods]
    return _score_cell(spec.methods, train, valid, data_rng, p1, rep)


def load_source_csv(spec: ExperimentSpec) -> LabeledDataset:
    src = spec.source
    return load_csv(src["csv"], src.get("label_column", -1), bool(src.get("has_header", True)))


def run_rows(spec: ExperimentSpec, workers: int | None = None) -> list[dict]:
    workers = resolve_workers(workers)
    if "generator" in spec.source:
        jobs = []
        for li, p1 in enumerate(spec.levels):
            gspec = generator_spec(spec, p1)
            jobs += [(spec, gspec, li, p1, rep) for rep in range(spec.replications)]
        fn = _simulated_job
    else:
        full = load_source_csv(spec)
        jobs = [(spec, full, li, p1, rep) for li, p1 in enumerate(spec.levels) for rep in range(spec.replications)]
        fn = _real_job
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(fn, jobs))
    else:
        chunks = [fn(job) for job in jobs]
    # job order is (level, replication) and methods are in spec order inside a job
    rows = [row for chunk in chunks for row in chunk]
    for row in rows:
        row.setdefault("axis", "")
        row.setdefault("axis_value", "")
    return rows


def summarize(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[float]] = {}
    errors: dict[tuple, int] = {}
    for row in rows:
        key = (row["method"], row["p1"], row.get("axis", ""), row.get("axis_value", ""))
        groups.setdefault(key, [])
        errors.setdefault(key, 0)
        if row["error"] or row["am_risk"] == "":
            errors[key] += 1
        else:
            groups[key].append(float(row["am_risk"]))
    out = []
    for key, vals in groups.items():
        arr = np.asarray(vals)
        stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else float("nan")
        out.append({"method": key[0], "p1": key[1], "axis": key[2], "axis_value": key[3],
                    "mean_am_risk": float(arr.mean()) if arr.size else float("nan"), "stderr": stderr,
                    "replications": int(arr.size), "failed": errors[key]})
    return out


def format_value(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows: list[dict], include_wall_time: bool = True) -> str:
    fields = [f for f in ROW_FIELDS if include_wall_time or f != "wall_time"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([format_value(row.get(f, "")) for f in fields])
    return buf.getvalue()


def write_outputs(spec: ExperimentSpec, rows: list[dict], output, extra: dict | None = None) -> tuple[Path, Path]:
    """Rows to ``<output>.csv`` (or the path itself when it ends in .csv) and the summary to ``.json``."""
    output = Path(output)
    csv_path = output if output.suffix == ".csv" else output.with_suffix(".csv")
    json_path = csv_path.with_suffix(".json")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(rows_to_csv(rows))
    summary = {"schema_version": SCHEMA_VERSION, "config": spec.to_dict(), "summary": summarize(rows),
               **(extra or {})}
    json_path.write_text(json.dumps(summary, indent=2, default=str))
    return csv_path, json_path


def run_experiment(spec: ExperimentSpec, workers: int | None = None, output=None) -> list[dict]:
    rows = run_rows(spec, workers)
    output = output or spec.output
    if output:
        write_outputs(spec, rows, output)
    return rows


def _override(method: MethodSpec, axis: str, value) -> MethodSpec:
    over = method.oversampler
    if over is None:
        return method
    if axis == "smote_k" and over.method == SMOTE:
        return replace(method, oversampler=replace(over, k=int(value)))
    if axis == "kdeo_scale" and over.method == KDEO:
        return replace(method, oversampler=replace(over, scale=float(value)))
    return method


def sweep(spec: ExperimentSpec, axis: str, values, workers: int | None = None, output=None) -> list[dict]:
    """One experiment per axis value with that oversampling hyperparameter overridden (matched seeds)."""
    if axis not in ("smote_k", "kdeo_scale"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep axis is empty")
    rows = []
    for value in values:
        sub = replace(spec, methods=tuple(_override(m, axis, value) for m in spec.methods), output=None)
        for row in run_rows(sub, workers):
            row["axis"], row["axis_value"] = axis, value
            rows.append(row)
    output = output or spec.output
    if output:
        write_outputs(spec, rows, output, {"sweep": {"axis": axis, "values": values}})
    return rows


def real_data_pipeline(csv_path, label_column, levels, methods, replications: int = 50, seed: int = 0,
                       standardize_features: bool = True, workers: int | None = None, output=None) -> list[dict]:
    spec = ExperimentSpec(source={"csv": str(csv_path), "label_column": label_column,
                                  "standardize": standardize_features},
                          methods=tuple(methods), replications=replications, levels=tuple(levels), seed=seed,
                          output=output)
    return run_experiment(spec, workers)
