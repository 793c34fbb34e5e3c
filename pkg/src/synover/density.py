"""Gaussian kernel density estimation with scalar or matrix bandwidth."""
from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .oversampling import BandwidthSpec, BandwidthError

_CHUNK_ELEMS = 4_000_000


class KdeModel:
    """(1/n) sum_i N(x; X_i, L L^T), evaluated in whitened coordinates and log space."""

    def __init__(self, points, bw: BandwidthSpec):
        X = np.array(points, dtype=float, copy=True)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[0] < 1:
            raise ValueError("KDE needs at least one point")
        n, d = X.shape
        if bw.kind == "scalar" and not bw.h > 0:
            raise BandwidthError("scalar bandwidth must be strictly positive for evaluation")
        L = bw.factor_for(d)
        diag = np.abs(np.diag(L))
        if not np.allclose(L, np.tril(L)):
            L = np.linalg.cholesky(L @ L.T)
            diag = np.abs(np.diag(L))
        if np.any(diag <= 1e-300) or not np.isfinite(L).all():
            raise BandwidthError("singular matrix bandwidth")
        self.points = X
        self.bw = bw
        self.d = d
        self._L = L
        self._Z = solve_triangular(L, X.T, lower=True).T
        self.log_norm_const = -0.5 * d * np.log(2 * np.pi) - np.log(diag).sum() - np.log(n)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def log_evaluate(self, queries) -> np.ndarray:
        Q = np.asarray(queries, dtype=float)
        single = Q.ndim == 1 and self.d > 1 or Q.ndim == 0
        Q = Q.reshape(-1, self.d) if Q.ndim <= 1 else Q
        if Q.shape[1] != self.d:
            raise ValueError(f"query dimension {Q.shape[1]} does not match model dimension {self.d}")
        Zq = solve_triangular(self._L, Q.T, lower=True).T
        out = np.empty(Q.shape[0])
        step = max(1, _CHUNK_ELEMS // (self.n * self.d))
        for s in range(0, Q.shape[0], step):
            diff = Zq[s:s + step, None, :] - self._Z[None, :, :]
            sq = np.einsum("qnd,qnd->qn", diff, diff)
            out[s:s + step] = logsumexp(-0.5 * sq, axis=1) + self.log_norm_const
        return out[0] if single else out

    def evaluate(self, queries) -> np.ndarray:
        return np.exp(self.log_evaluate(queries))

    __call__ = evaluate


def kde_fit(points, bw: BandwidthSpec) -> KdeModel:
    return KdeModel(points, bw)


def kde_evaluate(model: KdeModel, x):
    return model.evaluate(x)


def l1_error_estimate(estimate, true_density, domain, grid_per_dim: int) -> float:
    """Midpoint tensor-grid quadrature of the integral of |estimate - true_density| over a box.

    ``estimate`` and ``true_density`` map an (q, d) array to q density values;
    ``domain`` is a pair (lower, upper) of length-d corners.
    """
    lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in domain)
    d = lo.size
    if d > 3:
        raise ValueError("grid quadrature supports d <= 3 only")
    if hi.shape != lo.shape or np.any(hi <= lo):
        raise ValueError("degenerate integration box")
    if grid_per_dim < 1:
        raise ValueError("grid_per_dim must be >= 1")
    widths = (hi - lo) / grid_per_dim
    axes = [lo[j] + widths[j] * (np.arange(grid_per_dim) + 0.5) for j in range(d)]
    grid = np.array(list(itertools.product(*axes))) if d > 1 else axes[0].reshape(-1, 1)
    diff = np.abs(np.asarray(estimate(grid), dtype=float) - np.asarray(true_density(grid), dtype=float))
    return float(diff.sum() * np.prod(widths))
