"""Pseudo-occupancy map cleaning over a polar bin grid.

Offline method. For each query scan, the raw map is cropped to the scan's
range volume and both clouds are binned on a (range ring x azimuth sector)
polar grid in sensor-local coordinates. Bins whose query height span shrinks
to under ``ratio_thresh`` of the map's span are dynamic candidates; a
region-wise ground plane fit then keeps the candidate bin's ground points
and discards the rest as dynamic.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .geometry import LabeledCloud, Pose, as_points
from .preprocess import fit_plane_lsq

DEFAULT_RATIO_THRESH = 0.2


@dataclass(frozen=True)
class BinGrid:
    """Polar occupancy bins with per-bin z statistics.

    Ring index is ``floor(r_xy / (max_range / n_rings))``, sector index is
    ``floor(azimuth / (2 pi / n_sectors))`` with azimuth in [0, 2 pi); z is
    measured relative to the sensor origin (plus any configured offset).
    """

    n_rings: int
    n_sectors: int
    max_range: float
    counts: np.ndarray  # (n_rings * n_sectors,)
    min_z: np.ndarray
    max_z: np.ndarray
    _order: np.ndarray  # in-range point indices sorted by flat bin id
    _bounds: np.ndarray  # searchsorted bin boundaries into _order
    n_skipped: int

    def same_geometry(self, other: "BinGrid") -> bool:
        return (
            self.n_rings == other.n_rings
            and self.n_sectors == other.n_sectors
            and self.max_range == other.max_range
        )

    def flat(self, ring: int, sector: int) -> int:
        return ring * self.n_sectors + sector

    def points_in(self, ring: int, sector: int) -> np.ndarray:
        b = self.flat(ring, sector)
        return self._order[self._bounds[b] : self._bounds[b + 1]]

    def delta_h(self, ring: int, sector: int) -> float:
        b = self.flat(ring, sector)
        if self.counts[b] == 0:
            return 0.0
        return float(self.max_z[b] - self.min_z[b])

    def delta_h_matrix(self) -> np.ndarray:
        dh = np.where(self.counts > 0, self.max_z - self.min_z, 0.0)
        return dh.reshape(self.n_rings, self.n_sectors)


def _build_bins_local(local: np.ndarray, n_rings: int, n_sectors: int, max_range: float, z_offset: float) -> BinGrid:
    if n_rings < 1 or n_sectors < 1:
        raise ValueError("bin grid needs at least one ring and one sector")
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    r = np.sqrt(local[:, 0] ** 2 + local[:, 1] ** 2)
    ok = r <= max_range
    ring = np.minimum((r * (n_rings / max_range)).astype(np.int64), n_rings - 1)
    az = np.arctan2(local[:, 1], local[:, 0])
    az = np.where(az < 0, az + 2.0 * np.pi, az)
    sector = np.minimum((az * (n_sectors / (2.0 * np.pi))).astype(np.int64), n_sectors - 1)
    flat = ring * n_sectors + sector

    idx = np.nonzero(ok)[0]
    flat_ok = flat[idx]
    n_bins = n_rings * n_sectors
    z = local[:, 2] + z_offset

    counts = np.bincount(flat_ok, minlength=n_bins)
    min_z = np.full(n_bins, np.inf)
    max_z = np.full(n_bins, -np.inf)
    np.minimum.at(min_z, flat_ok, z[idx])
    np.maximum.at(max_z, flat_ok, z[idx])

    order_local = np.argsort(flat_ok, kind="stable")
    order = idx[order_local]
    bounds = np.searchsorted(flat_ok[order_local], np.arange(n_bins + 1))
    return BinGrid(
        n_rings=n_rings,
        n_sectors=n_sectors,
        max_range=float(max_range),
        counts=counts,
        min_z=min_z,
        max_z=max_z,
        _order=order,
        _bounds=bounds,
        n_skipped=int(local.shape[0] - idx.size),
    )


def build_bins(points, sensor_pose: Pose, n_rings: int, n_sectors: int, max_range: float, z_offset: float = 0.0) -> BinGrid:
    """Bin world-frame points on the sensor-local polar grid.

    Points beyond ``max_range`` (horizontal distance) are skipped and
    counted. Every in-range point lands in exactly one bin.
    """
    local = sensor_pose.inverse_transform(as_points(points))
    return _build_bins_local(local, n_rings, n_sectors, max_range, z_offset)


def candidate_bins(
    query: BinGrid,
    map_bins: BinGrid,
    ratio_thresh: float = DEFAULT_RATIO_THRESH,
    min_map_points: int = 1,
) -> list[tuple[int, int]]:
    """Bins whose query/map height-span ratio is strictly below the threshold.

    Bins empty on either side, map bins under ``min_map_points``, and bins
    with zero map span are never candidates.
    """
    if not query.same_geometry(map_bins):
        raise ValueError("bin grids differ in geometry")
    q_dh = np.where(query.counts > 0, query.max_z - query.min_z, 0.0)
    m_dh = np.where(map_bins.counts > 0, map_bins.max_z - map_bins.min_z, 0.0)
    eligible = (query.counts > 0) & (map_bins.counts >= max(1, min_map_points)) & (m_dh > 0)
    ratio = np.divide(q_dh, m_dh, out=np.full_like(q_dh, np.inf), where=m_dh > 0)
    flat = np.nonzero(eligible & (ratio < ratio_thresh))[0]
    s = map_bins.n_sectors
    return [(int(b) // s, int(b) % s) for b in flat]


def rgpf(points, iterations: int = 3, ground_thresh: float = 0.125, seed_quantile: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    """Region-wise ground plane fit inside one candidate bin.

    Seeds a least-squares plane from the lowest-z quantile, re-selects
    inliers within ``ground_thresh`` and refits ``iterations`` times. Points
    within the final plane's threshold are ground (kept static), the rest
    are dynamic. Bins under 3 points are kept static wholesale.
    """
    pts = as_points(points)
    n = pts.shape[0]
    if n == 0:
        raise ValueError("empty bin")
    if n < 3:
        return np.ones(n, dtype=bool), np.zeros(n, dtype=bool)
    n_seed = max(3, int(np.ceil(seed_quantile * n)))
    seeds = np.argsort(pts[:, 2], kind="stable")[:n_seed]
    plane = fit_plane_lsq(pts[seeds])
    for _ in range(iterations):
        inliers = plane.distances(pts) <= ground_thresh
        if inliers.sum() < 3:
            break
        plane = fit_plane_lsq(pts[inliers])
    ground = plane.distances(pts) <= ground_thresh
    return ground, ~ground


@dataclass(frozen=True)
class ErasorConfig:
    n_rings: int = 20
    n_sectors: int = 60
    max_range: float = 60.0
    ratio_thresh: float = DEFAULT_RATIO_THRESH
    min_bin_points: int = 5
    rgpf_iterations: int = 3
    rgpf_ground_thresh: float = 0.125
    rgpf_seed_quantile: float = 0.2
    sensor_height: float = 0.0


@dataclass
class ErasorResult:
    mask: np.ndarray  # 1 = dynamic, aligned to the raw map
    frame_times: np.ndarray
    n_candidate_bins: int


def run_erasor(frames, raw_map, cfg: ErasorConfig = ErasorConfig()) -> ErasorResult:
    frames = list(frames)
    if not frames:
        raise ValueError("erasor needs at least one frame")
    map_pts = raw_map.points if isinstance(raw_map, LabeledCloud) else as_points(raw_map)

    dynamic = np.zeros(map_pts.shape[0], dtype=bool)
    times = np.zeros(len(frames))
    n_cand = 0
    for f, frame in enumerate(frames):
        t0 = time.perf_counter()
        local_map = frame.pose.inverse_transform(map_pts)
        r_xy = np.sqrt(local_map[:, 0] ** 2 + local_map[:, 1] ** 2)
        crop = np.nonzero(r_xy <= cfg.max_range)[0]
        if crop.size == 0:
            times[f] = time.perf_counter() - t0
            continue
        m_bins = _build_bins_local(local_map[crop], cfg.n_rings, cfg.n_sectors, cfg.max_range, cfg.sensor_height)
        q_bins = _build_bins_local(np.asarray(frame.points), cfg.n_rings, cfg.n_sectors, cfg.max_range, cfg.sensor_height)
        cands = candidate_bins(q_bins, m_bins, cfg.ratio_thresh, cfg.min_bin_points)
        n_cand += len(cands)
        cropped_local = local_map[crop]
        for ring, sector in cands:
            members = m_bins.points_in(ring, sector)
            _, dyn_mask = rgpf(
                cropped_local[members],
                cfg.rgpf_iterations,
                cfg.rgpf_ground_thresh,
                cfg.rgpf_seed_quantile,
            )
            dynamic[crop[members[dyn_mask]]] = True
        times[f] = time.perf_counter() - t0

    return ErasorResult(dynamic.astype(np.uint8), times, n_cand)
