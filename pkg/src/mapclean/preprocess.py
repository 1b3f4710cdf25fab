"""Per-frame preprocessing: statistical outlier removal and ground-plane fit.

Both run on one scan at a time in sensor-local coordinates; they are pure
functions and safe to call concurrently on different frames.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import as_points

DEFAULT_SOR_K = 10
DEFAULT_SOR_STD_MULT = 1.0
DEFAULT_SAC_DIST_THRESH = 0.1
DEFAULT_SAC_MAX_ITERS = 100


@dataclass(frozen=True)
class PlaneModel:
    """Plane ``normal . p + d = 0`` with unit normal, normal.z >= 0."""

    normal: np.ndarray
    d: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        norm = float(np.sqrt((n * n).sum()))
        if not np.isfinite(norm) or norm < 1e-12:
            raise ValueError("degenerate plane normal")
        n = n / norm
        # canonical orientation: z up, then x, then y
        if n[2] < 0 or (n[2] == 0 and (n[0] < 0 or (n[0] == 0 and n[1] < 0))):
            n = -n
            object.__setattr__(self, "d", -float(self.d))
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)

    def distances(self, points) -> np.ndarray:
        pts = as_points(points)
        return np.abs(pts @ self.normal + self.d)


def sor_filter(points, k: int = DEFAULT_SOR_K, std_mult: float = DEFAULT_SOR_STD_MULT) -> np.ndarray:
    """Statistical outlier removal inlier mask.

    d_i is the mean distance of point i to its k nearest neighbors; a point
    is an inlier iff d_i <= mu + std_mult * sigma where mu and sigma are the
    mean and (population) standard deviation of all d_i.
    """
    pts = as_points(points)
    n = pts.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if std_mult <= 0:
        raise ValueError("std_mult must be positive")
    if n <= k:
        raise ValueError(f"need more than k={k} points, got {n}")
    tree = cKDTree(pts)
    dist, _ = tree.query(pts, k=k + 1)
    d = dist[:, 1:].mean(axis=1)  # column 0 is the point itself
    mu = d.mean()
    sigma = d.std()
    return d <= mu + std_mult * sigma


def fit_plane_lsq(points) -> PlaneModel:
    """Total-least-squares plane through a point set (>= 3 points)."""
    pts = as_points(points)
    if pts.shape[0] < 3:
        raise ValueError("plane fit needs at least 3 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    normal = vecs[:, 0]
    return PlaneModel(normal, -float(normal @ centroid))


def ransac_ground(
    points,
    dist_thresh: float = DEFAULT_SAC_DIST_THRESH,
    max_iters: int = DEFAULT_SAC_MAX_ITERS,
    seed: int = 0,
) -> tuple[PlaneModel, np.ndarray]:
    """RANSAC plane over 3-point samples, refined once by least squares.

    Returns the refined plane and its inlier mask (|n.p + d| <= dist_thresh).
    Deterministic for a given seed.
    """
    pts = as_points(points)
    n = pts.shape[0]
    if n < 3:
        raise ValueError("ground fit needs at least 3 points")
    if dist_thresh <= 0:
        raise ValueError("dist_thresh must be positive")
    rng = np.random.default_rng(seed)
    scale = max(float(np.abs(pts).max()), 1.0)

    best_count = -1
    best_mask = None
    for _ in range(max_iters):
        i, j, l = rng.choice(n, size=3, replace=False)
        v1 = pts[j] - pts[i]
        v2 = pts[l] - pts[i]
        normal = np.cross(v1, v2)
        norm = float(np.sqrt((normal * normal).sum()))
        if norm < 1e-12 * scale * scale:
            continue  # collinear sample
        normal = normal / norm
        d = -float(normal @ pts[i])
        dist = np.abs(pts @ normal + d)
        mask = dist <= dist_thresh
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
    if best_mask is None or best_count < 3:
        raise ValueError("degenerate input: no non-collinear 3-point sample found")

    plane = fit_plane_lsq(pts[best_mask])
    inliers = plane.distances(pts) <= dist_thresh
    return plane, inliers
