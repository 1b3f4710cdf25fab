"""Nearest-neighbor index over a fixed point set.

Backed by a kd-tree for the search, but candidate distances are recomputed
with plain ``sqrt(dx^2 + dy^2 + dz^2)`` arithmetic and ties are broken by
insertion order, so results are exactly reproducible against an exhaustive
scan. Build once, then query from any number of threads.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .geometry import as_points


class NeighborIndex:
    def __init__(self, points):
        pts = as_points(points)
        if pts.shape[0] == 0:
            raise ValueError("cannot index an empty point set")
        self._points = np.array(pts, copy=True)
        self._points.setflags(write=False)
        self._tree = cKDTree(self._points)

    def __len__(self) -> int:
        return self._points.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self._points

    def nearest(self, query, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """The k nearest indexed points to ``query``.

        Returns (distances, indices), distance-ascending; equal distances
        order by insertion index.
        """
        n = self._points.shape[0]
        if not 1 <= k <= n:
            raise ValueError(f"k={k} out of range for index of size {n}")
        q = np.asarray(query, dtype=np.float64).reshape(3)
        d_upper, _ = self._tree.query(q, k=k)
        radius = float(np.max(d_upper)) if k > 1 else float(d_upper)
        candidates = self._tree.query_ball_point(q, radius * (1.0 + 1e-12) + 1e-300)
        while len(candidates) < k:  # fp paranoia: widen until k candidates
            radius = max(radius * 2.0, 1e-9)
            candidates = self._tree.query_ball_point(q, radius)
        cand = np.asarray(candidates, dtype=np.int64)
        diff = self._points[cand] - q
        dist = np.sqrt((diff * diff).sum(axis=1))
        order = np.lexsort((cand, dist))[:k]
        return dist[order], cand[order]

    def nearest_distances(self, queries) -> np.ndarray:
        """Distance from each query point to its nearest indexed point."""
        qs = as_points(queries)
        out = np.empty(qs.shape[0], dtype=np.float64)
        for i in range(qs.shape[0]):
            d, _ = self.nearest(qs[i], k=1)
            out[i] = d[0]
        return out
