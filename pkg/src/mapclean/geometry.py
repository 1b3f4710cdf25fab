"""Rigid-body geometry: quaternion poses, frame transforms, and the core
point-cloud containers shared by every pipeline stage.

Point sets are numpy float64 arrays of shape (n, 3), world or sensor frame
depending on context. Labels are uint8 arrays using ``STATIC`` / ``DYNAMIC``.
All containers are frozen and their arrays are marked read-only, so they are
safe to share across concurrent readers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATIC = 0
DYNAMIC = 1

_QUAT_NORM_TOL = 1e-9


def as_points(points) -> np.ndarray:
    """Coerce to a float64 (n, 3) array without copying when possible."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1 and pts.size == 3:
        pts = pts.reshape(1, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (n, 3) points, got shape {pts.shape}")
    return pts


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValueError("quaternion must have 4 components (w, x, y, z)")
    norm = float(np.sqrt(np.sum(q * q)))
    if not np.isfinite(norm) or norm < 1e-12:
        raise ValueError("quaternion norm is zero or non-finite")
    q = q / norm
    if q[0] < 0.0:  # canonical hemisphere, keeps serialization stable
        q = -q
    return q


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion given as (w, x, y, z)."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def yaw_quat(yaw: float) -> np.ndarray:
    """Quaternion for a rotation of ``yaw`` radians about +z."""
    return np.array([np.cos(yaw / 2.0), 0.0, 0.0, np.sin(yaw / 2.0)])


@dataclass(frozen=True)
class Pose:
    """Sensor-to-world rigid transform.

    ``rotation`` is a unit quaternion (w, x, y, z); it is normalized on
    construction and must be within 1e-9 of unit length afterwards.
    """

    translation: np.ndarray
    rotation: np.ndarray
    matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("pose translation must be finite")
        q = quat_normalize(self.rotation)
        if abs(float(np.sqrt(np.sum(q * q))) - 1.0) > _QUAT_NORM_TOL:
            raise ValueError("quaternion failed to normalize")
        t.setflags(write=False)
        q.setflags(write=False)
        m = quat_to_matrix(q)
        m.setflags(write=False)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    def transform(self, points) -> np.ndarray:
        """Map sensor-frame points into the world frame."""
        pts = as_points(points)
        return pts @ self.matrix.T + self.translation

    def inverse_transform(self, points) -> np.ndarray:
        """Map world-frame points into the sensor frame."""
        pts = as_points(points)
        return (pts - self.translation) @ self.matrix

    def as_row(self) -> np.ndarray:
        """(tx, ty, tz, qw, qx, qy, qz) row, the VIEWPOINT ordering."""
        return np.concatenate([self.translation, self.rotation])


def _freeze_points(points) -> np.ndarray:
    pts = np.array(as_points(points), dtype=np.float64, copy=True)
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True)
class ScanFrame:
    """One LiDAR sweep: sensor-frame points plus the sensor->world pose."""

    points: np.ndarray
    pose: Pose
    index: int
    n_dropped: int = 0

    def __post_init__(self):
        pts = _freeze_points(self.points)
        if pts.shape[0] == 0:
            raise ValueError("scan frame must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("scan frame points must be finite")
        if self.index < 0:
            raise ValueError("frame index must be non-negative")
        object.__setattr__(self, "points", pts)

    def world_points(self) -> np.ndarray:
        return self.pose.transform(self.points)


@dataclass(frozen=True)
class LabeledCloud:
    """World-frame points with a per-point static/dynamic tag."""

    points: np.ndarray
    labels: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        pts = _freeze_points(self.points)
        labels = np.array(self.labels, dtype=np.uint8, copy=True).reshape(-1)
        if labels.shape[0] != pts.shape[0]:
            raise ValueError(
                f"labels length {labels.shape[0]} != points length {pts.shape[0]}"
            )
        if labels.size and labels.max() > DYNAMIC:
            raise ValueError("labels must be 0 (static) or 1 (dynamic)")
        labels.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.points.shape[0]


def transform_to_world(frame: ScanFrame) -> np.ndarray:
    """World-frame coordinates of a scan frame's points."""
    return frame.world_points()
