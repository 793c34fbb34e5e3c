"""Deterministic, splittable random streams and the distribution samplers.

Every stream is identified by ``(seed, lineage)``.  The underlying generator is
a PCG64 seeded from ``SeedSequence(seed, spawn_key=lineage)``, so a child
stream never depends on how much of its parent has been consumed, and two
children with different labels are independent.
"""
from __future__ import annotations

import numpy as np

EXP_RATE = "rate"
EXP_MEAN = "mean"


class RngStream:
    """Single-owner random stream. Share across workers only via :meth:`substream`."""

    def __init__(self, seed: int, lineage: tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if any(int(label) < 0 for label in lineage):
            raise ValueError("substream labels must be nonnegative integers")
        self.seed = int(seed)
        self.lineage = tuple(int(label) for label in lineage)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.lineage)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def substream(self, *labels: int) -> "RngStream":
        return RngStream(self.seed, self.lineage + tuple(labels))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, lineage={self.lineage})"


def substream(root: RngStream, *labels: int) -> RngStream:
    return root.substream(*labels)


def as_stream(rng: RngStream | int | None) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(0 if rng is None else int(rng))


def sample_uniform(rng: RngStream, size=None):
    """Uniform draws on [0, 1)."""
    return rng.generator.random(size)


def sample_gaussian_vector(rng: RngStream, d: int, size=None) -> np.ndarray:
    shape = (d,) if size is None else (size, d)
    return rng.generator.standard_normal(shape)


def sample_bernoulli(rng: RngStream, p, size=None):
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr < 0) | (p_arr > 1)) or np.any(np.isnan(p_arr)):
        raise ValueError("bernoulli probability must lie in [0, 1]")
    u = rng.generator.random(size if size is not None else p_arr.shape or None)
    return (u < p_arr).astype(np.int64)


def sample_categorical(rng: RngStream, weights, size=None):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
        raise ValueError("categorical weights must be nonnegative with positive sum")
    cdf = np.cumsum(w / w.sum())
    cdf[-1] = 1.0
    u = rng.generator.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    # zero-weight trailing categories are unreachable even when u rounds onto a cdf step
    return np.minimum(idx, np.flatnonzero(w > 0)[-1])


def sample_exponential(rng: RngStream, rate, size=None, convention: str = EXP_RATE):
    """Exponential draws. ``rate`` is a rate (mean 1/rate) unless ``convention='mean'``."""
    r = np.asarray(rate, dtype=float)
    if np.any(r <= 0) or not np.isfinite(r).all():
        raise ValueError("exponential parameter must be positive")
    if convention not in (EXP_RATE, EXP_MEAN):
        raise ValueError(f"unknown exponential convention {convention!r}")
    mean = 1.0 / r if convention == EXP_RATE else r
    u = rng.generator.random(size if size is not None else r.shape or None)
    return -mean * np.log1p(-u)


def gpd_ppf(u, sigma, xi):
    """Inverse CDF of the generalized Pareto law with location 0."""
    u = np.asarray(u, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("GPD scale must be positive")
    if xi == 0:
        return -sigma * np.log1p(-u)
    return (sigma / xi) * np.expm1(-xi * np.log1p(-u))


def gpd_cdf(z, sigma, xi):
    z = np.maximum(np.asarray(z, dtype=float), 0.0)
    if xi == 0:
        return -np.expm1(-z / sigma)
    base = 1.0 + xi * z / sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 - np.power(np.maximum(base, 0.0), -1.0 / xi)
    return np.clip(out, 0.0, 1.0)


def egpd_ppf(u, kappa, sigma, xi):
    """Inverse CDF of the power-of-CDF extended GPD, F = H**kappa."""
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa <= 0):
        raise ValueError("EGPD power must be positive")
    return gpd_ppf(np.power(np.asarray(u, dtype=float), 1.0 / kappa), sigma, xi)


def egpd_cdf(z, kappa, sigma, xi):
    return np.power(gpd_cdf(z, sigma, xi), kappa)


def sample_gpd(rng: RngStream, sigma, xi: float, size=None):
    sigma_arr = np.asarray(sigma, dtype=float)
    if np.any(sigma_arr <= 0):
        raise ValueError("GPD scale must be positive")
    u = rng.generator.random(size if size is not None else sigma_arr.shape or None)
    return gpd_ppf(u, sigma_arr, xi)


def sample_egpd(rng: RngStream, kappa, sigma, xi: float, size=None):
    kappa_arr = np.asarray(kappa, dtype=float)
    sigma_arr = np.asarray(sigma, dtype=float)
    if np.any(kappa_arr <= 0) or np.any(sigma_arr <= 0):
        raise ValueError("EGPD power and scale must be positive")
    shape = size if size is not None else np.broadcast(kappa_arr, sigma_arr).shape or None
    u = rng.generator.random(shape)
    return egpd_ppf(u, kappa_arr, sigma_arr, xi)
