"""SMOTE and KDE-based oversampling (KDEO) of the minority class.

Both samplers draw a seed uniformly among the minority rows.  SMOTE moves it a
uniform fraction of the way towards one of its k nearest minority neighbors;
KDEO adds Gaussian noise shaped by a bandwidth factor, which is the same as
sampling from the minority-class Gaussian KDE.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset, partition_classes
from .neighbors import NeighborIndex
from .rng import RngStream

log = logging.getLogger(__name__)

SMOTE = "smote"
KDEO = "kdeo"
PURE = "pure"
TOPUP = "topup"


class BandwidthError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BandwidthSpec:
    """Gaussian kernel bandwidth.

    ``factor`` is the matrix multiplying standard normal noise, so the kernel
    covariance is ``factor @ factor.T``.  The scalar kind keeps ``h`` and uses
    ``h * I`` as its factor.
    """

    kind: str
    h: float | None = None
    factor: np.ndarray | None = None

    @classmethod
    def scalar(cls, h: float) -> "BandwidthSpec":
        if not h >= 0:
            raise BandwidthError("scalar bandwidth must be >= 0")
        return cls("scalar", h=float(h))

    @classmethod
    def matrix(cls, factor) -> "BandwidthSpec":
        L = np.array(factor, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise BandwidthError("bandwidth factor must be square")
        return cls("matrix", factor=L)

    @classmethod
    def from_cov(cls, cov) -> "BandwidthSpec":
        return cls.matrix(psd_cholesky(cov))

    def factor_for(self, d: int) -> np.ndarray:
        if self.kind == "scalar":
            return self.h * np.eye(d)
        if self.factor.shape[0] != d:
            raise BandwidthError(f"bandwidth is {self.factor.shape[0]}-dimensional, data is {d}-dimensional")
        return self.factor

    def cov_for(self, d: int) -> np.ndarray:
        L = self.factor_for(d)
        return L @ L.T

    def scaled(self, c: float) -> "BandwidthSpec":
        if self.kind == "scalar":
            return BandwidthSpec.scalar(c * self.h)
        return BandwidthSpec.matrix(c * self.factor)

    def to_dict(self) -> dict:
        if self.kind == "scalar":
            return {"kind": "scalar", "h": self.h}
        return {"kind": "matrix", "factor": self.factor.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "BandwidthSpec":
        if obj["kind"] == "scalar":
            return cls.scalar(obj["h"])
        return cls.matrix(obj["factor"])


def psd_cholesky(C, rtol: float = 1e-10) -> np.ndarray:
    """Lower-triangular L with L @ L.T == C for symmetric positive semi-definite C.

    Falls back to a semidefinite elimination that zeroes columns with vanishing
    pivots, so rank-deficient covariances give a factor with zero columns.
    """
    C = np.asarray(C, dtype=float)
    C = 0.5 * (C + C.T)
    d = C.shape[0]
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        pass
    scale = max(np.trace(C) / d, np.finfo(float).tiny)
    tol = 1e-12 * scale
    L = np.zeros_like(C)
    for j in range(d):
        pivot = C[j, j] - L[j, :j] @ L[j, :j]
        if pivot > tol:
            L[j, j] = np.sqrt(pivot)
            L[j + 1:, j] = (C[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
        elif pivot < -1e-8 * scale:
            raise BandwidthError("covariance is not positive semi-definite")
    resid = np.linalg.norm(L @ L.T - C) / max(np.linalg.norm(C), np.finfo(float).tiny)
    if resid > max(rtol, 1e-8):
        # diagonally dominant jitter as a last resort for near-singular input
        Cj = C + 1e-12 * scale * np.eye(d)
        try:
            return np.linalg.cholesky(Cj)
        except np.linalg.LinAlgError:
            raise BandwidthError("covariance is not positive semi-definite") from None
    return L


def sample_covariance(points) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] < 2:
        raise BandwidthError("covariance needs at least 2 points")
    return np.atleast_2d(np.cov(X, rowvar=False, ddof=1))


def scott_bandwidth(points, scale: float = 1.0, n_rate: int | None = None) -> BandwidthSpec:
    """Scott's rule: factor = scale * n**(-1/(d+4)) * chol(C), C the sample covariance.

    ``n_rate`` overrides the count used in the rate (defaults to the number of points).
    """
    if not scale > 0:
        raise BandwidthError("scale must be positive")
    C = sample_covariance(points)
    n = np.asarray(points).shape[0] if n_rate is None else n_rate
    d = C.shape[0]
    return BandwidthSpec.matrix(scale * n ** (-1.0 / (d + 4)) * psd_cholesky(C))


@dataclass(frozen=True)
class SmoteConfig:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("SMOTE needs k >= 1")


@dataclass(frozen=True, eq=False)
class OversampleResult:
    """Synthetic points with provenance.

    For SMOTE rows ``neighbor_index``/``lam`` are filled and ``noise`` is None;
    for KDEO rows ``noise`` holds the standard normal draw and ``neighbor_index`` is -1.
    """

    synthetic: np.ndarray
    seed_index: np.ndarray
    neighbor_index: np.ndarray
    lam: np.ndarray | None = None
    noise: np.ndarray | None = None
    k_used: int | None = None
    clamped: bool = False


def smote_interpolate(minority, seed_index, neighbor_index, lam) -> np.ndarray:
    X = np.asarray(minority, dtype=float)
    lam = np.asarray(lam, dtype=float)[:, None]
    return (1.0 - lam) * X[seed_index] + lam * X[neighbor_index]


def effective_k(k: int, n1: int) -> tuple[int, bool]:
    if n1 > 1 and k > n1 - 1:
        return n1 - 1, True
    return k, False


def smote_sample(minority, cfg: SmoteConfig, m: int, rng: RngStream) -> OversampleResult:
    X = np.asarray(minority, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n1 = X.shape[0]
    if n1 == 0:
        raise ValueError("SMOTE undefined on empty minority class")
    if m < 0:
        raise ValueError("number of synthetic samples must be >= 0")
    gen = rng.generator
    seeds = gen.integers(0, n1, size=m)
    if n1 == 1:
        lam = gen.random(m)
        return OversampleResult(X[seeds].copy(), seeds, seeds.copy(), lam, k_used=0)

    k, clamped = effective_k(cfg.k, n1)
    if clamped:
        warnings.warn(f"SMOTE k={cfg.k} clamped to n1-1={k}", RuntimeWarning, stacklevel=2)
    neighbors = NeighborIndex(X).all_member_neighbors(k)
    slot = gen.integers(0, k, size=m)
    lam = gen.random(m)
    nbr = neighbors[seeds, slot]
    return OversampleResult(smote_interpolate(X, seeds, nbr, lam), seeds, nbr, lam, k_used=k, clamped=clamped)


def kdeo_sample(minority, bw: BandwidthSpec, m: int, rng: RngStream) -> OversampleResult:
    X = np.asarray(minority, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n1, d = X.shape
    if n1 == 0:
        raise ValueError("KDEO undefined on empty minority class")
    if m < 0:
        raise ValueError("number of synthetic samples must be >= 0")
    gen = rng.generator
    seeds = gen.integers(0, n1, size=m)
    W = gen.standard_normal((m, d))
    if bw.kind == "scalar":
        out = X[seeds] + bw.h * W
    else:
        out = X[seeds] + W @ bw.factor_for(d).T
    return OversampleResult(out, seeds, np.full(m, -1), noise=W)


@dataclass(frozen=True)
class OversamplerConfig:
    """Which oversampler to run and how. ``bandwidth`` overrides Scott's rule for KDEO."""

    method: str = SMOTE
    k: int = 5
    scale: float = 1.0
    mode: str = PURE
    bandwidth: BandwidthSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.method not in (SMOTE, KDEO):
            raise ValueError(f"unknown oversampling method {self.method!r}")
        if self.mode not in (PURE, TOPUP):
            raise ValueError(f"unknown oversampling mode {self.mode!r}")


def kdeo_bandwidth(minority, scale: float = 1.0) -> BandwidthSpec:
    X = np.asarray(minority, dtype=float)
    if X.shape[0] < 2:
        log.warning("KDEO with a single minority point: zero bandwidth")
        return BandwidthSpec.scalar(0.0)
    return scott_bandwidth(X, scale=scale)


def generate(minority, cfg: OversamplerConfig, m: int, rng: RngStream) -> OversampleResult:
    if cfg.method == SMOTE:
        return smote_sample(minority, SmoteConfig(cfg.k), m, rng)
    bw = cfg.bandwidth if cfg.bandwidth is not None else kdeo_bandwidth(minority, cfg.scale)
    return kdeo_sample(minority, bw, m, rng)


def oversample_to_balance(ds: LabeledDataset, cfg: OversamplerConfig, rng: RngStream, return_result: bool = False):
    """Balance ``ds`` with synthetic minority rows (ids -1).

    ``pure`` mode replaces the minority class by m = n0 synthetic rows; ``topup``
    keeps the originals and adds n0 - n1 synthetic rows.  An empty minority class
    leaves the data unchanged.
    """
    view = partition_classes(ds)
    d = ds.d
    if view.n1 == 0:
        empty = OversampleResult(np.empty((0, d)), np.empty(0, int), np.empty(0, int))
        return (ds, empty) if return_result else ds

    minority = ds.features[view.minority_indices]
    m = view.n0 if cfg.mode == PURE else max(view.n0 - view.n1, 0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = generate(minority, cfg, m, rng)
    if res.clamped:
        log.warning("SMOTE k=%d clamped to %d", cfg.k, res.k_used)

    keep = view.majority_indices if cfg.mode == PURE else np.arange(ds.n)
    base = ds.take(keep)
    out = LabeledDataset(
        np.vstack([base.features, res.synthetic]),
        np.concatenate([base.labels, np.ones(m, dtype=np.int64)]),
        np.concatenate([base.ids, np.full(m, -1)]),
    )
    return (out, res) if return_result else out
