"""Synthetic data-generating processes and imbalance calibration.

Families
--------
ex1   X ~ N(0, I_d), Y ~ Bernoulli(expit(X_1 + alpha))
ex2   X ~ N(0, I_d), Z ~ GPD(exp(X_1), 0.5), Y = 1{Z > t}
ex3   Z = B sin(X_1/2) Y1 + (1-B) sin(X_2/2) Y2, Y1 ~ GPD(1, 0.5), Y2 ~ Exp(10), Y = 1{Z > t}
ex4   d = 2, four N(mu_c, 6 I) components with weights w, Y = 1{component in {3, 4}}
exS1  Z = B Y1 + (1-B) Y2, Y1 ~ EGPD(exp(X_1), exp(X_2), 0.5), Y2 ~ Exp(10 exp(X_3)), Y = 1{Z > t}
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit
from scipy.stats import multivariate_normal

from . import rng as rngmod
from .data import LabeledDataset, balance_by_undersampling, partition_classes
from .rng import RngStream

log = logging.getLogger(__name__)

FAMILIES = ("ex1", "ex2", "ex3", "ex4", "exS1")
_ALIASES = {"example1": "ex1", "example2": "ex2", "example3": "ex3", "example4": "ex4",
            "examples1": "exS1", "s1": "exS1", "exs1": "exS1"}

EX4_MEANS = np.array([[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 10.0]])
EX4_VARIANCE = 6.0
GPD_SHAPE = 0.5
EXP_LEVEL = 10.0


class CalibrationError(RuntimeError):
    pass


def canonical_family(name: str) -> str:
    key = name.strip()
    if key in FAMILIES:
        return key
    low = key.lower().replace(".", "").replace("_", "")
    if low in _ALIASES:
        return _ALIASES[low]
    for fam in FAMILIES:
        if fam.lower() == low:
            return fam
    raise ValueError(f"unknown generator family {name!r}")


@dataclass(frozen=True)
class GeneratorSpec:
    """``params`` holds ``alpha`` (ex1), ``t`` (ex2, ex3, exS1) or ``weights`` (ex4)."""

    family: str
    d: int = 4
    params: dict = field(default_factory=dict)
    n: int = 1000
    exp_convention: str = rngmod.EXP_RATE

    def __post_init__(self):
        fam = canonical_family(self.family)
        object.__setattr__(self, "family", fam)
        if fam == "ex4":
            if self.d != 2:
                object.__setattr__(self, "d", 2)
            w = self.params.get("weights")
            if w is not None:
                w = np.asarray(w, dtype=float)
                if w.shape != (4,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
                    raise ValueError("ex4 weights must be 4 nonnegative numbers summing to 1")
        if fam == "ex3" and self.d < 2:
            raise ValueError("ex3 needs d >= 2")
        if fam == "exS1" and self.d < 3:
            raise ValueError("exS1 needs d >= 3")
        if self.d < 1 or self.n < 0:
            raise ValueError("invalid dimension or sample count")

    def with_params(self, **params) -> "GeneratorSpec":
        return replace(self, params={**self.params, **params})


def _require(spec: GeneratorSpec, key: str):
    if key not in spec.params:
        raise ValueError(f"{spec.family} needs parameter {key!r} (calibrate first)")
    return spec.params[key]


def latent(spec: GeneratorSpec, rng: RngStream, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Features and the latent score thresholded into labels (for ex1, the logit offset X_1)."""
    fam, d = spec.family, spec.d
    gen = rng.generator
    if fam == "ex4":
        raise ValueError("ex4 has no scalar latent score")
    X = gen.standard_normal((n, d))
    if fam == "ex1":
        return X, X[:, 0]
    if fam == "ex2":
        return X, rngmod.sample_gpd(rng, np.exp(X[:, 0]), GPD_SHAPE)
    if fam == "ex3":
        B = rngmod.sample_bernoulli(rng, 0.5, size=n)
        Y1 = rngmod.sample_gpd(rng, np.ones(n), GPD_SHAPE)
        Y2 = rngmod.sample_exponential(rng, np.full(n, EXP_LEVEL), convention=spec.exp_convention)
        Z = B * np.sin(X[:, 0] / 2) * Y1 + (1 - B) * np.sin(X[:, 1] / 2) * Y2
        return X, Z
    # exS1
    B = rngmod.sample_bernoulli(rng, 0.5, size=n)
    Y1 = rngmod.sample_egpd(rng, np.exp(X[:, 0]), np.exp(X[:, 1]), GPD_SHAPE)
    Y2 = rngmod.sample_exponential(rng, EXP_LEVEL * np.exp(X[:, 2]), convention=spec.exp_convention)
    return X, B * Y1 + (1 - B) * Y2


def generate(spec: GeneratorSpec, rng: RngStream, n: int | None = None) -> LabeledDataset:
    n = spec.n if n is None else n
    if spec.family == "ex4":
        w = np.asarray(_require(spec, "weights"), dtype=float)
        comp = rngmod.sample_categorical(rng, w, size=n)
        X = EX4_MEANS[comp] + np.sqrt(EX4_VARIANCE) * rng.generator.standard_normal((n, 2))
        return LabeledDataset(X, (comp >= 2).astype(np.int64))
    X, Z = latent(spec, rng, n)
    if spec.family == "ex1":
        p = expit(Z + float(_require(spec, "alpha")))
        y = (rng.generator.random(n) < p).astype(np.int64)
    else:
        y = (Z > float(_require(spec, "t"))).astype(np.int64)
    return LabeledDataset(X, y)


def ex4_weights(target_p1: float) -> np.ndarray:
    return np.array([(1 - target_p1) / 2, (1 - target_p1) / 2, target_p1 / 2, target_p1 / 2])


def ex4_class_density(x, label: int, weights=None) -> np.ndarray:
    """Analytic class-conditional density of ex4 (mixture of the label's two components)."""
    w = ex4_weights(0.5) if weights is None else np.asarray(weights, dtype=float)
    comps = (0, 1) if label == 0 else (2, 3)
    total = w[list(comps)].sum()
    if total == 0:
        # class has no mass: return the equal-weight conditional shape
        sub = np.array([0.5, 0.5])
    else:
        sub = w[list(comps)] / total
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    cov = EX4_VARIANCE * np.eye(2)
    return sum(s * multivariate_normal(EX4_MEANS[c], cov).pdf(x) for s, c in zip(sub, comps))


def ex4_bayes_rule(x, weights=None) -> np.ndarray:
    """Balanced Bayes classifier 1{f1(x) > f0(x)} from the closed-form densities."""
    return (ex4_class_density(x, 1, weights) > ex4_class_density(x, 0, weights)).astype(np.int64)


def sample_ex4_minority(rng: RngStream, n1: int, weights=None) -> np.ndarray:
    """Draws from the ex4 class-1 conditional law."""
    w = ex4_weights(0.5) if weights is None else np.asarray(weights, dtype=float)
    sub = w[2:] / w[2:].sum()
    comp = 2 + rngmod.sample_categorical(rng, sub, size=n1)
    return EX4_MEANS[comp] + np.sqrt(EX4_VARIANCE) * rng.generator.standard_normal((n1, 2))


def _cache_key(family, d, target_p1, seed, mc_size, exp_convention) -> str:
    return f"{family}|d={d}|p1={target_p1!r}|seed={seed}|mc={mc_size}|exp={exp_convention}"


def calibrate(family: str, d: int, target_p1: float, mc_size: int = 1_000_000, rng: RngStream | None = None,
              cache_path=None, exp_convention: str = rngmod.EXP_RATE):
    """Parameter hitting P(Y=1) = target_p1: alpha (ex1), t (ex2/ex3/exS1) or weights (ex4)."""
    family = canonical_family(family)
    if not 0.0 < target_p1 < 1.0:
        raise ValueError("target_p1 must lie in (0, 1)")
    if family == "ex4":
        return ex4_weights(target_p1).tolist()
    rng = rng if rng is not None else RngStream(0)
    key = _cache_key(family, d, target_p1, (rng.seed, rng.lineage), mc_size, exp_convention)
    cache = {}
    if cache_path is not None and Path(cache_path).exists():
        cache = json.loads(Path(cache_path).read_text())
        if key in cache:
            return cache[key]

    spec = GeneratorSpec(family, d=d, exp_convention=exp_convention)
    _, Z = latent(spec, rng, mc_size)
    if family == "ex1":
        value = _bisect_alpha(Z, target_p1)
    else:
        value = float(np.quantile(Z, 1.0 - target_p1))

    if cache_path is not None:
        cache[key] = value
        Path(cache_path).write_text(json.dumps(cache, indent=1, sort_keys=True))
    return value


def _bisect_alpha(x1: np.ndarray, target: float, lo: float = -40.0, hi: float = 40.0, tol: float = 1e-6) -> float:
    def mean_at(a):
        return float(expit(x1 + a).mean())

    f_lo, f_hi = mean_at(lo) - target, mean_at(hi) - target
    if f_lo > 0 or f_hi < 0:
        raise CalibrationError(f"bisection bracket [{lo}, {hi}] does not contain the target {target}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = mean_at(mid) - target
        if abs(f_mid) < tol:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrated_spec(family: str, target_p1: float, d: int = 4, n: int = 1000, mc_size: int = 1_000_000,
                    rng: RngStream | None = None, cache_path=None,
                    exp_convention: str = rngmod.EXP_RATE) -> GeneratorSpec:
    family = canonical_family(family)
    value = calibrate(family, d, target_p1, mc_size, rng, cache_path, exp_convention)
    key = {"ex1": "alpha", "ex4": "weights"}.get(family, "t")
    return GeneratorSpec(family, d=d, params={key: value}, n=n, exp_convention=exp_convention)


def balanced_validation_set(spec: GeneratorSpec, rng: RngStream, n_raw: int = 10_000) -> LabeledDataset:
    for attempt in range(2):
        raw = generate(spec, rng.substream(attempt), n=n_raw)
        view = partition_classes(raw)
        if view.n1 and view.n0:
            return balance_by_undersampling(raw, rng.substream(attempt, 1))
        log.warning("validation draw %d had an empty class; retrying", attempt)
    raise CalibrationError("validation sample has an empty class after retry")
