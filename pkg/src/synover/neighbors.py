"""Exact Euclidean k-nearest-neighbor search with deterministic tie-breaking.

Neighbors are ordered by squared distance, ties broken by ascending row index.
Small problems are solved by brute force; larger ones use a kd-tree for
candidate generation followed by an exact re-ranking of every point tied with
the k-th candidate, so both paths return identical answers.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

BRUTE_FORCE_LIMIT = 60_000  # n * d below which brute force is used
_CHUNK_ELEMS = 4_000_000


def _sq_dists(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    # explicit differences, not the |a|^2 - 2ab + |b|^2 expansion: exact zeros and reproducible ties
    diff = queries[:, None, :] - points[None, :, :]
    return np.einsum("qnd,qnd->qn", diff, diff)


class NeighborIndex:
    def __init__(self, points, force_brute: bool | None = None):
        P = np.array(points, dtype=float, copy=True)
        if P.ndim == 1:
            P = P.reshape(-1, 1)
        if P.shape[0] < 1:
            raise ValueError("cannot build a neighbor index on an empty point set")
        if not np.isfinite(P).all():
            raise ValueError("points must be finite")
        self.points = P
        self.points.flags.writeable = False
        n, d = P.shape
        self.brute = force_brute if force_brute is not None else (n * d <= BRUTE_FORCE_LIMIT or d > 16)
        self._tree = None if self.brute else cKDTree(P)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def query(self, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
        """k nearest stored rows of each query (no exclusion). Returns (indices, distances)."""
        Q = np.asarray(queries, dtype=float)
        if Q.ndim == 1:
            Q = Q.reshape(1, -1)
        if Q.shape[1] != self.points.shape[1]:
            raise ValueError("query dimension does not match the index")
        if not 1 <= k <= self.n:
            raise ValueError(f"k={k} out of range [1, {self.n}]")
        if self.brute:
            idx, d2 = self._brute(Q, k)
        else:
            idx, d2 = self._tree_query(Q, k)
        return idx, np.sqrt(d2)

    def _brute(self, Q, k):
        q = Q.shape[0]
        idx = np.empty((q, k), dtype=np.int64)
        d2 = np.empty((q, k))
        step = max(1, _CHUNK_ELEMS // (self.n * Q.shape[1]))
        for s in range(0, q, step):
            D = _sq_dists(Q[s:s + step], self.points)
            if k < self.n:
                part = np.argpartition(D, k - 1, axis=1)[:, :k]
                pd2 = np.take_along_axis(D, part, axis=1)
                order = np.lexsort((part, pd2), axis=1)
                idx[s:s + step] = np.take_along_axis(part, order, axis=1)
                d2[s:s + step] = np.take_along_axis(pd2, order, axis=1)
                # argpartition picks arbitrarily among points tied with the k-th; re-rank those rows
                tied = np.flatnonzero((D <= pd2.max(axis=1, keepdims=True)).sum(axis=1) > k)
                for r in tied:
                    row = D[r]
                    cand = np.flatnonzero(row <= row[idx[s + r, -1]])
                    best = cand[np.argsort(row[cand], kind="stable")][:k]
                    idx[s + r] = best
                    d2[s + r] = row[best]
            else:
                order = np.argsort(D, axis=1, kind="stable")
                idx[s:s + step] = order
                d2[s:s + step] = np.take_along_axis(D, order, axis=1)
        return idx, d2

    def _tree_query(self, Q, k):
        q = Q.shape[0]
        idx = np.empty((q, k), dtype=np.int64)
        d2 = np.empty((q, k))
        dist, _ = self._tree.query(Q, k=k)
        dist = np.asarray(dist).reshape(q, k)
        radius = dist[:, -1] * (1 + 1e-9) + 1e-12
        for r in range(q):
            cand = np.asarray(self._tree.query_ball_point(Q[r], radius[r]), dtype=np.int64)
            cand.sort()
            D = _sq_dists(Q[r:r + 1], self.points[cand])[0]
            order = np.argsort(D, kind="stable")[:k]
            idx[r] = cand[order]
            d2[r] = D[order]
        return idx, d2

    def knn_of_member(self, member_row: int, k: int) -> np.ndarray:
        """k nearest rows to a stored point, excluding that row itself."""
        return self.knn_of_members([member_row], k)[0]

    def knn_of_members(self, member_rows, k: int) -> np.ndarray:
        rows = np.asarray(member_rows, dtype=np.int64)
        if not 1 <= k <= self.n - 1:
            raise ValueError(f"k={k} out of range [1, {self.n - 1}]")
        if rows.size and (rows.min() < 0 or rows.max() >= self.n):
            raise ValueError("member row out of range")
        idx, _ = self.query(self.points[rows], k + 1)
        out = np.empty((rows.size, k), dtype=np.int64)
        for i, row in enumerate(rows):
            keep = idx[i][idx[i] != row]
            out[i] = keep[:k]
        return out

    def all_member_neighbors(self, k: int) -> np.ndarray:
        return self.knn_of_members(np.arange(self.n), k)

    def kth_neighbor_distance(self, query, k: int) -> float:
        _, dist = self.query(np.asarray(query, dtype=float).reshape(1, -1), k)
        return float(dist[0, -1])


def build_index(points, force_brute: bool | None = None) -> NeighborIndex:
    return NeighborIndex(points, force_brute=force_brute)

