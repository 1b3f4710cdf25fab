"""Sparse voxel occupancy grid with log-odds updates and exact ray traversal.

Cells are addressed by integer keys ``floor(p / resolution)`` packed into a
single int64 (21 bits per signed axis, so roughly +-1e6 cells per axis). The
traversal is incremental integer stepping (Amanatides-Woo): it yields every
voxel the open segment from origin to endpoint passes through, in order,
excluding the endpoint's own voxel.

Grid state lives in sorted parallel arrays (packed key -> log-odds), so a
whole scan's net update is one vectorized merge. The grid is single-writer:
scans integrate sequentially. Lookups never mutate, so a finished grid is
safe to query concurrently.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numba
import numpy as np

COORD_BITS = 21
COORD_OFFSET = 1 << 20
_COORD_MASK = (1 << COORD_BITS) - 1

DEFAULT_RESOLUTION = 0.1
DEFAULT_P_HIT = 0.7
DEFAULT_P_MISS = 0.4
DEFAULT_CLAMP_MIN = -2.0
DEFAULT_CLAMP_MAX = 3.5
DEFAULT_OCC_THRESHOLD = 0.5
DEFAULT_MAX_RAY_LENGTH = 60.0

PRIOR_PROBABILITY = 0.5


class VoxelKey(NamedTuple):
    ix: int
    iy: int
    iz: int


def logit(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must be in (0, 1), got {p}")
    return math.log(p / (1.0 - p))


def sigmoid(l: float) -> float:
    return 1.0 / (1.0 + math.exp(-l))


def voxel_key(point, resolution: float) -> VoxelKey:
    x, y, z = point
    return VoxelKey(
        int(math.floor(x / resolution)),
        int(math.floor(y / resolution)),
        int(math.floor(z / resolution)),
    )


def pack_key(key: VoxelKey) -> int:
    return (
        ((key[0] + COORD_OFFSET) << (2 * COORD_BITS))
        | ((key[1] + COORD_OFFSET) << COORD_BITS)
        | (key[2] + COORD_OFFSET)
    )


def pack_keys(points: np.ndarray, resolution: float) -> np.ndarray:
    """Packed int64 cell keys of the points' containing voxels."""
    idx = np.floor(np.asarray(points, dtype=np.float64) / resolution).astype(np.int64)
    return (
        ((idx[:, 0] + COORD_OFFSET) << (2 * COORD_BITS))
        | ((idx[:, 1] + COORD_OFFSET) << COORD_BITS)
        | (idx[:, 2] + COORD_OFFSET)
    )


def unpack_key(packed: int) -> VoxelKey:
    return VoxelKey(
        int((packed >> (2 * COORD_BITS)) & _COORD_MASK) - COORD_OFFSET,
        int((packed >> COORD_BITS) & _COORD_MASK) - COORD_OFFSET,
        int(packed & _COORD_MASK) - COORD_OFFSET,
    )


def _in_sorted(sorted_arr: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Membership mask of ``values`` in a sorted unique array."""
    if sorted_arr.size == 0 or values.size == 0:
        return np.zeros(values.shape, dtype=bool)
    pos = np.searchsorted(sorted_arr, values)
    pos_clip = np.minimum(pos, sorted_arr.size - 1)
    return (pos < sorted_arr.size) & (sorted_arr[pos_clip] == values)


@numba.njit(cache=True)
def _traverse(ox, oy, oz, ex, ey, ez, inv_res, out, start):
    """Write packed keys of cells crossed before the endpoint cell; return new fill."""
    ix = int(math.floor(ox * inv_res))
    iy = int(math.floor(oy * inv_res))
    iz = int(math.floor(oz * inv_res))
    jx = int(math.floor(ex * inv_res))
    jy = int(math.floor(ey * inv_res))
    jz = int(math.floor(ez * inv_res))

    dx = ex - ox
    dy = ey - oy
    dz = ez - oz

    step_x = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
    step_y = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
    step_z = 1 if dz > 0.0 else (-1 if dz < 0.0 else 0)

    if step_x != 0:
        nxt = (ix + 1) if step_x > 0 else ix
        t_max_x = (nxt / inv_res - ox) / dx
        t_delta_x = 1.0 / (abs(dx) * inv_res)
    else:
        t_max_x = np.inf
        t_delta_x = np.inf
    if step_y != 0:
        nxt = (iy + 1) if step_y > 0 else iy
        t_max_y = (nxt / inv_res - oy) / dy
        t_delta_y = 1.0 / (abs(dy) * inv_res)
    else:
        t_max_y = np.inf
        t_delta_y = np.inf
    if step_z != 0:
        nxt = (iz + 1) if step_z > 0 else iz
        t_max_z = (nxt / inv_res - oz) / dz
        t_delta_z = 1.0 / (abs(dz) * inv_res)
    else:
        t_max_z = np.inf
        t_delta_z = np.inf

    n = start
    while not (ix == jx and iy == jy and iz == jz):
        out[n] = (
            ((ix + COORD_OFFSET) << (2 * COORD_BITS))
            | ((iy + COORD_OFFSET) << COORD_BITS)
            | (iz + COORD_OFFSET)
        )
        n += 1
        # Step the axis with the nearest boundary crossing, but never an axis
        # already at its target cell: that guards against fp drift walking
        # past the endpoint cell when the endpoint sits on a cell face.
        axis = -1
        best = np.inf
        if ix != jx and t_max_x < best:
            axis = 0
            best = t_max_x
        if iy != jy and t_max_y < best:
            axis = 1
            best = t_max_y
        if iz != jz and t_max_z < best:
            axis = 2
        if axis == 0:
            ix += step_x
            t_max_x += t_delta_x
        elif axis == 1:
            iy += step_y
            t_max_y += t_delta_y
        elif axis == 2:
            iz += step_z
            t_max_z += t_delta_z
        else:  # unreachable: a differing axis always has a finite t_max
            break
    return n


@numba.njit(cache=True)
def _traverse_batch(origin, ends, inv_res, out):
    pos = 0
    for r in range(ends.shape[0]):
        pos = _traverse(
            origin[0], origin[1], origin[2],
            ends[r, 0], ends[r, 1], ends[r, 2],
            inv_res, out, pos,
        )
    return pos


def _traversal_budget(origin: np.ndarray, ends: np.ndarray, resolution: float) -> int:
    spans = np.abs(ends - origin).sum(axis=1)
    return int(np.ceil(spans.sum() / resolution)) + 4 * ends.shape[0] + 16


def raycast(origin, endpoint, resolution: float) -> list[VoxelKey]:
    """Voxels crossed by the open segment origin->endpoint, endpoint cell excluded.

    The origin's voxel is included. A segment contained in a single voxel
    (including a zero-length one) yields an empty list.
    """
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    o = np.asarray(origin, dtype=np.float64).reshape(3)
    e = np.asarray(endpoint, dtype=np.float64).reshape(3)
    if not (np.all(np.isfinite(o)) and np.all(np.isfinite(e))):
        raise ValueError("ray endpoints must be finite")
    out = np.empty(_traversal_budget(o, e.reshape(1, 3), resolution), dtype=np.int64)
    n = _traverse(o[0], o[1], o[2], e[0], e[1], e[2], 1.0 / resolution, out, 0)
    return [unpack_key(int(k)) for k in out[:n]]


class OccupancyGrid:
    """Sparse log-odds occupancy map over cubic cells.

    Per-cell log-odds stay inside ``[clamp_min, clamp_max]``. Cells carry an
    optional ground flag; flagged cells are never updated and never traversed
    (rays skip them), and ``ray_visits`` counts the voxel visits actually
    performed across all integrations.
    """

    def __init__(
        self,
        resolution: float = DEFAULT_RESOLUTION,
        p_hit: float = DEFAULT_P_HIT,
        p_miss: float = DEFAULT_P_MISS,
        clamp_min: float = DEFAULT_CLAMP_MIN,
        clamp_max: float = DEFAULT_CLAMP_MAX,
        max_ray_length: float = DEFAULT_MAX_RAY_LENGTH,
    ):
        if resolution <= 0.0:
            raise ValueError("resolution must be positive")
        if not 0.5 < p_hit < 1.0:
            raise ValueError("p_hit must lie in (0.5, 1)")
        if not 0.0 < p_miss < 0.5:
            raise ValueError("p_miss must lie in (0, 0.5)")
        if clamp_min >= clamp_max:
            raise ValueError("clamp_min must be below clamp_max")
        self._resolution = float(resolution)
        self.p_hit = float(p_hit)
        self.p_miss = float(p_miss)
        self.clamp_min = float(clamp_min)
        self.clamp_max = float(clamp_max)
        self.max_ray_length = float(max_ray_length)
        self._keys = np.empty(0, dtype=np.int64)  # sorted
        self._vals = np.empty(0, dtype=np.float64)
        self._ground_sorted = np.empty(0, dtype=np.int64)
        self.ray_visits = 0

    @property
    def resolution(self) -> float:
        return self._resolution

    def __len__(self) -> int:
        return int(self._keys.size)

    # -- ground flags ------------------------------------------------------

    def flag_ground_points(self, points) -> None:
        """Mark the voxels containing these points as ground."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.size == 0:
            return
        keys = np.unique(pack_keys(pts.reshape(-1, 3), self._resolution))
        self._ground_sorted = np.union1d(self._ground_sorted, keys)

    def is_ground_key(self, key: VoxelKey) -> bool:
        return bool(_in_sorted(self._ground_sorted, np.array([pack_key(key)]))[0])

    def ground_mask(self, points) -> np.ndarray:
        """Per-point flag: does the point's voxel carry the ground mark."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return _in_sorted(self._ground_sorted, pack_keys(pts, self._resolution))

    @property
    def n_ground_cells(self) -> int:
        return int(self._ground_sorted.size)

    # -- updates -----------------------------------------------------------

    def _apply(self, keys: np.ndarray, delta: float) -> None:
        """Add ``delta`` to unique ``keys`` (sorted), clamped."""
        if keys.size == 0:
            return
        pos = np.searchsorted(self._keys, keys)
        pos_clip = np.minimum(pos, max(self._keys.size - 1, 0))
        exists = (
            (pos < self._keys.size) & (self._keys[pos_clip] == keys)
            if self._keys.size
            else np.zeros(keys.shape, dtype=bool)
        )
        upd = pos[exists]
        self._vals[upd] = np.clip(self._vals[upd] + delta, self.clamp_min, self.clamp_max)
        new = keys[~exists]
        if new.size:
            where = pos[~exists]
            self._keys = np.insert(self._keys, where, new)
            self._vals = np.insert(
                self._vals, where, np.clip(delta, self.clamp_min, self.clamp_max)
            )

    def integrate_scan(self, origin, hits, p_hit: float | None = None, p_miss: float | None = None) -> None:
        """Apply one scan: hit cells gain logit(p_hit), traversed cells logit(p_miss).

        Each voxel receives at most one net update per scan; a voxel that is
        both hit and traversed within the scan takes only the hit. Rays
        longer than ``max_ray_length`` contribute their endpoint hit but no
        free-space updates. Ground-flagged voxels are left untouched.
        """
        p_hit = self.p_hit if p_hit is None else float(p_hit)
        p_miss = self.p_miss if p_miss is None else float(p_miss)
        if not 0.5 < p_hit < 1.0:
            raise ValueError("p_hit must lie in (0.5, 1)")
        if not 0.0 < p_miss < 0.5:
            raise ValueError("p_miss must lie in (0, 0.5)")
        o = np.asarray(origin, dtype=np.float64).reshape(3)
        pts = np.asarray(hits, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] == 0:
            return

        hit_keys = np.unique(pack_keys(pts, self._resolution))

        deltas = pts - o
        lengths = np.sqrt((deltas * deltas).sum(axis=1))
        castable = (lengths > 0.0) & (lengths <= self.max_ray_length)
        ends = pts[castable]
        if ends.shape[0]:
            out = np.empty(_traversal_budget(o, ends, self._resolution), dtype=np.int64)
            n = _traverse_batch(o, ends, 1.0 / self._resolution, out)
            visited = out[:n]
        else:
            visited = np.empty(0, dtype=np.int64)

        ground = self._ground_sorted
        if ground.size:
            visited = visited[~_in_sorted(ground, visited)]
            hit_keys = hit_keys[~_in_sorted(ground, hit_keys)]
        self.ray_visits += int(visited.size)

        miss_keys = np.unique(visited)
        miss_keys = miss_keys[~_in_sorted(hit_keys, miss_keys)]

        self._apply(hit_keys, logit(p_hit))
        self._apply(miss_keys, logit(p_miss))

    # -- queries -----------------------------------------------------------

    def log_odds_of(self, packed: np.ndarray) -> np.ndarray:
        """Log-odds per packed key; absent cells read 0 (the 0.5 prior)."""
        out = np.zeros(packed.shape, dtype=np.float64)
        if self._keys.size == 0 or packed.size == 0:
            return out
        pos = np.searchsorted(self._keys, packed)
        pos_clip = np.minimum(pos, self._keys.size - 1)
        exists = (pos < self._keys.size) & (self._keys[pos_clip] == packed)
        out[exists] = self._vals[pos_clip[exists]]
        return out

    def log_odds(self, key: VoxelKey) -> float:
        return float(self.log_odds_of(np.array([pack_key(key)], dtype=np.int64))[0])

    def occupancy(self, key: VoxelKey) -> float:
        """Occupancy probability of a cell; absent cells sit at the 0.5 prior."""
        return sigmoid(self.log_odds(key))

    def occupancy_at(self, points) -> np.ndarray:
        """Vectorized occupancy probability of each point's containing cell."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        l = self.log_odds_of(pack_keys(pts, self._resolution))
        return 1.0 / (1.0 + np.exp(-l))


def occupancy(grid: OccupancyGrid, key: VoxelKey) -> float:
    return grid.occupancy(key)


def integrate_scan(grid: OccupancyGrid, origin, hits, p_hit=None, p_miss=None) -> None:
    grid.integrate_scan(origin, hits, p_hit=p_hit, p_miss=p_miss)
