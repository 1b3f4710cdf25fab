"""Visibility-based map cleaning via range-image differencing.

Offline method: needs the raw accumulated map up front. Each query scan and
the map are projected to spherical range images from the scan's sensor pose;
pixels where the query sees farther than the stored map range by more than
``tau_d`` mark their contributing map points as dynamic. Coarser-resolution
passes then revert flagged points that the query re-observes at their own
range, which is what keeps the static map intact.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import LabeledCloud, Pose, ScanFrame, as_points

_MIN_RANGE = 1e-9


@dataclass(frozen=True)
class RangeImage:
    """Spherical-projection depth image with per-point back references.

    ``ranges`` holds the minimum range per pixel (inf where empty);
    ``point_pixels``/``point_indices`` record, for every projected input
    point, its flat pixel id and its index in the caller's array.
    """

    width: int
    height: int
    fov_up: float
    fov_down: float
    ranges: np.ndarray
    point_pixels: np.ndarray
    point_indices: np.ndarray
    point_ranges: np.ndarray
    n_skipped: int

    def points_in(self, row: int, col: int) -> np.ndarray:
        """Indices of all points contributing to one pixel."""
        return self.point_indices[self.point_pixels == row * self.width + col]

    def same_geometry(self, other: "RangeImage") -> bool:
        return (
            self.width == other.width
            and self.height == other.height
            and self.fov_up == other.fov_up
            and self.fov_down == other.fov_down
        )


def _spherical_bins(pts_sensor: np.ndarray, width: int, height: int, fov_up: float, fov_down: float):
    """Pixel coordinates of sensor-frame points; invalid entries masked out."""
    r = np.sqrt((pts_sensor * pts_sensor).sum(axis=1))
    ok = r > _MIN_RANGE
    elev = np.zeros_like(r)
    np.arcsin(np.clip(np.divide(pts_sensor[:, 2], r, where=ok, out=np.zeros_like(r)), -1.0, 1.0), out=elev)
    ok &= (elev >= fov_down) & (elev <= fov_up)
    az = np.arctan2(pts_sensor[:, 1], pts_sensor[:, 0])
    u = np.floor((az + np.pi) / (2.0 * np.pi) * width).astype(np.int64)
    np.clip(u, 0, width - 1, out=u)
    v = np.floor((fov_up - elev) / (fov_up - fov_down) * height).astype(np.int64)
    np.clip(v, 0, height - 1, out=v)
    return ok, u, v, r


def project(points, sensor_pose: Pose, width: int, height: int, fov_up: float, fov_down: float) -> RangeImage:
    """Project world-frame points into a range image seen from ``sensor_pose``.

    Every in-FOV point is recorded against its pixel (not only the closest);
    the pixel's stored range is the minimum. Out-of-FOV points are skipped
    and counted in ``n_skipped``.
    """
    if fov_down >= fov_up:
        raise ValueError("fov_down must be below fov_up")
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be positive")
    pts = as_points(points)
    local = sensor_pose.inverse_transform(pts)
    ok, u, v, r = _spherical_bins(local, width, height, fov_up, fov_down)

    idx = np.nonzero(ok)[0]
    pixels = v[idx] * width + u[idx]
    ranges_flat = np.full(width * height, np.inf)
    np.minimum.at(ranges_flat, pixels, r[idx])
    return RangeImage(
        width=width,
        height=height,
        fov_up=float(fov_up),
        fov_down=float(fov_down),
        ranges=ranges_flat.reshape(height, width),
        point_pixels=pixels,
        point_indices=idx,
        point_ranges=r[idx],
        n_skipped=int(pts.shape[0] - idx.size),
    )


def diff_images(query: RangeImage, map_image: RangeImage) -> np.ndarray:
    """Element-wise query - map range difference; NaN where either is empty."""
    if not query.same_geometry(map_image):
        raise ValueError("range images differ in dimensions or FOV")
    valid = np.isfinite(query.ranges) & np.isfinite(map_image.ranges)
    diff = np.full(query.ranges.shape, np.nan)
    np.subtract(query.ranges, map_image.ranges, out=diff, where=valid)
    return diff


def detect_dynamic(diff: np.ndarray, map_image: RangeImage, tau_d: float) -> np.ndarray:
    """Map-point indices in pixels whose diff strictly exceeds ``tau_d``.

    A positive diff means the query saw through the stored map point, so
    the point was transient. All points contributing to a firing pixel are
    flagged. Returns sorted unique indices.
    """
    if diff.shape != map_image.ranges.shape:
        raise ValueError("diff matrix does not match the map image")
    flat = diff.ravel()
    fired = flat[map_image.point_pixels] > tau_d  # NaN compares false
    return np.unique(map_image.point_indices[fired])


@dataclass(frozen=True)
class RemovertConfig:
    azimuth_res_deg: float = 0.4
    revert_res_deg: tuple[float, ...] = (0.55, 0.7)
    tau_d: float = 0.1
    fov_up_deg: float = 3.0
    fov_down_deg: float = -25.0
    min_votes: int = 1


@dataclass
class RemovertResult:
    mask: np.ndarray  # 1 = dynamic, aligned to the raw map
    frame_times: np.ndarray
    n_flagged_initial: int


def _image_dims(res_deg: float, fov_up: float, fov_down: float) -> tuple[int, int]:
    width = max(1, round(360.0 / res_deg))
    height = max(1, round(np.degrees(fov_up - fov_down) / res_deg))
    return width, height


def run_removert(frames, raw_map, cfg: RemovertConfig = RemovertConfig()) -> RemovertResult:
    frames = list(frames)
    if not frames:
        raise ValueError("removert needs at least one frame")
    map_pts = raw_map.points if isinstance(raw_map, LabeledCloud) else as_points(raw_map)
    fov_up = np.radians(cfg.fov_up_deg)
    fov_down = np.radians(cfg.fov_down_deg)

    votes = np.zeros(map_pts.shape[0], dtype=np.int32)
    times = np.zeros(len(frames))
    world_cache: list[np.ndarray] = []

    width, height = _image_dims(cfg.azimuth_res_deg, fov_up, fov_down)
    for f, frame in enumerate(frames):
        t0 = time.perf_counter()
        q_world = frame.world_points()
        world_cache.append(q_world)
        q_img = project(q_world, frame.pose, width, height, fov_up, fov_down)
        m_img = project(map_pts, frame.pose, width, height, fov_up, fov_down)
        flagged = detect_dynamic(diff_images(q_img, m_img), m_img, cfg.tau_d)
        votes[flagged] += 1
        times[f] += time.perf_counter() - t0

    dynamic = votes >= cfg.min_votes
    n_initial = int(dynamic.sum())

    # Revert pass: at each coarser resolution, a candidate stays dynamic
    # only if the query sees through it (pixel minimum beyond the point's
    # own range by tau_d) in a strict majority of the frames whose image
    # actually observes its pixel. Statics flagged by fine-resolution
    # aliasing only fire sporadically and go back; points whose sight line
    # consistently shows background stay removed. No observing frame at
    # all (open sky behind) also reverts.
    for res in cfg.revert_res_deg:
        width, height = _image_dims(res, fov_up, fov_down)
        cand = np.nonzero(dynamic)[0]
        if cand.size == 0:
            break
        fired = np.zeros(cand.size, dtype=np.int32)
        observed = np.zeros(cand.size, dtype=np.int32)
        cand_pts = map_pts[cand]
        for f, frame in enumerate(frames):
            t0 = time.perf_counter()
            q_img = project(world_cache[f], frame.pose, width, height, fov_up, fov_down)
            local = frame.pose.inverse_transform(cand_pts)
            ok, u, v, r = _spherical_bins(local, width, height, fov_up, fov_down)
            q_at = q_img.ranges[v, u]
            valid = ok & np.isfinite(q_at)
            observed += valid
            fired += valid & (q_at - r > cfg.tau_d)
            times[f] += time.perf_counter() - t0
        dynamic = np.zeros_like(dynamic)
        dynamic[cand[2 * fired > observed]] = True

    return RemovertResult(dynamic.astype(np.uint8), times, n_initial)
