"""Deterministic synthetic LiDAR scene generator.

Scenes are built from analytic primitives (ground rectangles, axis-aligned
boxes, vertical poles, horizontal canopy discs) plus dynamic boxes on
per-frame tracks. A spinning-beam LiDAR model casts one ray per
(azimuth, elevation) pair and keeps the nearest primitive intersection
within range; optional Gaussian range noise (truncated at +-3 sigma) is
added along the ray. Points from dynamic primitives are labeled dynamic in
the accumulated ground truth, which is the union of all frames' world
points in frame order.

Everything is seeded and bit-deterministic, so generated datasets are
byte-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import LabeledCloud, Pose, ScanFrame, yaw_quat

_EPS = 1e-9

PRESET_NAMES = (
    "grazing_ground",
    "open_truck",
    "tree_pedestrian",
    "semi_indoor_16beam",
    "street_mixed",
)


# -- primitives -------------------------------------------------------------


@dataclass(frozen=True)
class Ground:
    """Horizontal rectangle at height z."""

    z: float
    x0: float
    x1: float
    y0: float
    y1: float

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.z - origin[2]) / dz
        t = np.where(np.abs(dz) < _EPS, np.inf, t)
        px = origin[0] + t * dirs[:, 0]
        py = origin[1] + t * dirs[:, 1]
        ok = (t > _EPS) & (px >= self.x0) & (px <= self.x1) & (py >= self.y0) & (py <= self.y1)
        return np.where(ok, t, np.inf)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; rays starting inside hit the inner surface."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - origin) / dirs
            t2 = (hi - origin) / dirs
        t_lo = np.minimum(t1, t2)
        t_hi = np.maximum(t1, t2)
        t_lo = np.where(np.isnan(t_lo), -np.inf, t_lo)
        t_hi = np.where(np.isnan(t_hi), np.inf, t_hi)
        enter = t_lo.max(axis=1)
        exit_ = t_hi.min(axis=1)
        ok = exit_ >= np.maximum(enter, _EPS)
        t = np.where(enter > _EPS, enter, exit_)
        return np.where(ok & (t > _EPS), t, np.inf)


@dataclass(frozen=True)
class Pole:
    """Vertical cylinder (no end caps)."""

    cx: float
    cy: float
    radius: float
    z0: float
    z1: float

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        ox = origin[0] - self.cx
        oy = origin[1] - self.cy
        dx = dirs[:, 0]
        dy = dirs[:, 1]
        a = dx * dx + dy * dy
        b = 2.0 * (ox * dx + oy * dy)
        c = ox * ox + oy * oy - self.radius * self.radius
        disc = b * b - 4.0 * a * c
        hit = (disc >= 0) & (a > _EPS)
        sq = np.sqrt(np.where(hit, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_near = (-b - sq) / (2.0 * a)
            t_far = (-b + sq) / (2.0 * a)
        t = np.where(t_near > _EPS, t_near, t_far)
        z = origin[2] + t * dirs[:, 2]
        ok = hit & (t > _EPS) & (z >= self.z0) & (z <= self.z1)
        return np.where(ok, t, np.inf)


@dataclass(frozen=True)
class Disc:
    """Horizontal disc (canopy) at height z."""

    cx: float
    cy: float
    z: float
    radius: float

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.z - origin[2]) / dz
        t = np.where(np.abs(dz) < _EPS, np.inf, t)
        px = origin[0] + t * dirs[:, 0] - self.cx
        py = origin[1] + t * dirs[:, 1] - self.cy
        ok = (t > _EPS) & (px * px + py * py <= self.radius * self.radius)
        return np.where(ok, t, np.inf)


@dataclass(frozen=True)
class MovingBox:
    """Dynamic box: ``track[f]`` is the (x, y, z-bottom) center position at frame f."""

    size: tuple[float, float, float]
    track: tuple[tuple[float, float, float], ...]

    def box_at(self, frame: int) -> Box:
        cx, cy, zb = self.track[frame]
        sx, sy, sz = self.size
        return Box(
            (cx - sx / 2.0, cy - sy / 2.0, zb),
            (cx + sx / 2.0, cy + sy / 2.0, zb + sz),
        )


_PRIMITIVE_TYPES = {"ground": Ground, "box": Box, "pole": Pole, "disc": Disc}


# -- scene specification ------------------------------------------------------


@dataclass(frozen=True)
class LidarModel:
    beam_elevations_deg: tuple[float, ...]
    azimuth_step_deg: float
    max_range: float
    noise_sigma: float = 0.0

    def __post_init__(self):
        elev = np.asarray(self.beam_elevations_deg, dtype=np.float64)
        if elev.size == 0:
            raise ValueError("lidar model needs at least one beam")
        if np.any(np.diff(elev) <= 0):
            raise ValueError("beam elevations must be strictly increasing")
        if self.azimuth_step_deg <= 0:
            raise ValueError("azimuth step must be positive")
        if self.max_range <= 0:
            raise ValueError("max range must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")


@dataclass(frozen=True)
class SceneSpec:
    name: str
    n_frames: int
    sensor_xyz: tuple[tuple[float, float, float], ...]
    sensor_yaw_deg: tuple[float, ...]
    statics: tuple
    dynamics: tuple[MovingBox, ...]
    lidar: LidarModel
    seed: int = 0

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("scene needs at least one frame")
        if len(self.sensor_xyz) != self.n_frames or len(self.sensor_yaw_deg) != self.n_frames:
            raise ValueError("sensor trajectory length must equal n_frames")
        for dyn in self.dynamics:
            if len(dyn.track) != self.n_frames:
                raise ValueError("dynamic track length must equal n_frames")

    def pose(self, frame: int) -> Pose:
        return Pose(
            np.asarray(self.sensor_xyz[frame], dtype=np.float64),
            yaw_quat(np.radians(self.sensor_yaw_deg[frame])),
        )

    def to_dict(self) -> dict:
        statics = []
        for prim in self.statics:
            kind = next(k for k, cls in _PRIMITIVE_TYPES.items() if isinstance(prim, cls))
            entry = {"type": kind}
            entry.update({f.name: getattr(prim, f.name) for f in prim.__dataclass_fields__.values()})
            statics.append(entry)
        return {
            "name": self.name,
            "n_frames": self.n_frames,
            "seed": self.seed,
            "sensor_xyz": [list(p) for p in self.sensor_xyz],
            "sensor_yaw_deg": list(self.sensor_yaw_deg),
            "statics": statics,
            "dynamics": [
                {"size": list(d.size), "track": [list(p) for p in d.track]} for d in self.dynamics
            ],
            "lidar": {
                "beam_elevations_deg": list(self.lidar.beam_elevations_deg),
                "azimuth_step_deg": self.lidar.azimuth_step_deg,
                "max_range": self.lidar.max_range,
                "noise_sigma": self.lidar.noise_sigma,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        statics = []
        for entry in data["statics"]:
            entry = dict(entry)
            kind = entry.pop("type")
            prim_cls = _PRIMITIVE_TYPES[kind]
            if kind == "box":
                entry["lo"] = tuple(entry["lo"])
                entry["hi"] = tuple(entry["hi"])
            statics.append(prim_cls(**entry))
        dynamics = tuple(
            MovingBox(tuple(d["size"]), tuple(tuple(p) for p in d["track"]))
            for d in data["dynamics"]
        )
        lidar = LidarModel(
            beam_elevations_deg=tuple(data["lidar"]["beam_elevations_deg"]),
            azimuth_step_deg=data["lidar"]["azimuth_step_deg"],
            max_range=data["lidar"]["max_range"],
            noise_sigma=data["lidar"]["noise_sigma"],
        )
        return cls(
            name=data["name"],
            n_frames=data["n_frames"],
            sensor_xyz=tuple(tuple(p) for p in data["sensor_xyz"]),
            sensor_yaw_deg=tuple(data["sensor_yaw_deg"]),
            statics=tuple(statics),
            dynamics=dynamics,
            lidar=lidar,
            seed=data["seed"],
        )


def ray_directions(lidar: LidarModel) -> np.ndarray:
    """Unit ray directions in the sensor frame, azimuth-major order."""
    az = np.radians(np.arange(0.0, 360.0 - 1e-9, lidar.azimuth_step_deg))
    elev = np.radians(np.asarray(lidar.beam_elevations_deg))
    azg, elg = np.meshgrid(az, elev, indexing="ij")
    azf = azg.ravel()
    elf = elg.ravel()
    return np.stack(
        [np.cos(elf) * np.cos(azf), np.cos(elf) * np.sin(azf), np.sin(elf)], axis=1
    )


def simulate(spec: SceneSpec) -> tuple[list[ScanFrame], LabeledCloud]:
    """Render the scene into scan frames plus the labeled accumulated map."""
    dirs_sensor = ray_directions(spec.lidar)
    rng = np.random.default_rng(spec.seed)
    sigma = spec.lidar.noise_sigma

    frames: list[ScanFrame] = []
    gt_points: list[np.ndarray] = []
    gt_labels: list[np.ndarray] = []
    for f in range(spec.n_frames):
        pose = spec.pose(f)
        origin = pose.translation
        dirs_world = dirs_sensor @ pose.matrix.T

        t_best = np.full(dirs_world.shape[0], np.inf)
        for prim in spec.statics:
            np.minimum(t_best, prim.intersect(origin, dirs_world), out=t_best)
        is_dynamic = np.zeros(dirs_world.shape[0], dtype=bool)
        for dyn in spec.dynamics:
            t = dyn.box_at(f).intersect(origin, dirs_world)
            closer = t < t_best
            t_best = np.where(closer, t, t_best)
            is_dynamic = np.where(closer, True, is_dynamic)

        hit = t_best <= spec.lidar.max_range
        r = t_best[hit]
        if sigma > 0.0:
            noise = np.clip(rng.normal(0.0, sigma, r.shape[0]), -3.0 * sigma, 3.0 * sigma)
            r = np.maximum(r + noise, 1e-6)
        pts_sensor = dirs_sensor[hit] * r[:, None]
        frames.append(ScanFrame(pts_sensor, pose, f))
        gt_points.append(pose.transform(pts_sensor))
        gt_labels.append(is_dynamic[hit].astype(np.uint8))

    gt = LabeledCloud(np.concatenate(gt_points, axis=0), np.concatenate(gt_labels))
    return frames, gt


# -- presets ------------------------------------------------------------------


def _linear_track(start: tuple[float, float, float], step: tuple[float, float, float], n: int):
    return tuple(
        (start[0] + i * step[0], start[1] + i * step[1], start[2] + i * step[2]) for i in range(n)
    )


def _sensor_line(n: int, start_x: float, step_x: float, z: float):
    xyz = tuple((start_x + i * step_x, 0.0, z) for i in range(n))
    return xyz, (0.0,) * n


def preset(name: str, seed: int | None = None) -> SceneSpec:
    """Named scene with documented geometry; see PRESET_NAMES."""
    if name == "grazing_ground":
        # Shallow ray-ground incidence at far range: free-space updates erase
        # true ground for plain occupancy mapping. One distant car keeps both
        # classes present.
        n = 20
        xyz, yaw = _sensor_line(n, 0.0, 1.5, 1.7)
        return SceneSpec(
            name=name,
            n_frames=n,
            sensor_xyz=xyz,
            sensor_yaw_deg=yaw,
            statics=(Ground(0.0, -20.0, 120.0, -30.0, 30.0),),
            dynamics=(
                MovingBox((4.2, 1.9, 1.5), _linear_track((45.0, 6.0, 0.0), (-1.2, 0.0, 0.0), n)),
            ),
            lidar=LidarModel(
                beam_elevations_deg=tuple(np.linspace(-25.0, 3.0, 64)),
                azimuth_step_deg=1.0,
                max_range=60.0,
                noise_sigma=0.0,
            ),
            seed=7 if seed is None else seed,
        )
    if name == "open_truck":
        # Tall dynamic box whose upper body has no background along any sight
        # line; only a low wall and the ground catch rays behind it. The box
        # lingers near its own trail for half the run, then the tail frames
        # sweep the vacated corridor.
        n = 40
        xyz, yaw = _sensor_line(n, 0.0, 0.15, 1.7)
        return SceneSpec(
            name=name,
            n_frames=n,
            sensor_xyz=xyz,
            sensor_yaw_deg=yaw,
            statics=(
                Ground(0.0, -20.0, 80.0, -30.0, 30.0),
                Box((28.0, -20.0, 0.0), (28.4, 20.0, 1.2)),
            ),
            dynamics=(
                MovingBox((7.0, 2.8, 3.8), _linear_track((15.0, -6.5, 0.0), (0.0, 0.65, 0.0), n)),
            ),
            lidar=LidarModel(
                beam_elevations_deg=tuple(np.linspace(-25.0, 3.0, 64)),
                azimuth_step_deg=1.0,
                max_range=60.0,
                noise_sigma=0.0,
            ),
            seed=11 if seed is None else seed,
        )
    if name == "tree_pedestrian":
        # Person walking under a canopy: the bin height span barely changes
        # when they leave, so span-ratio methods keep them.
        n = 20
        xyz, yaw = _sensor_line(n, 0.0, 0.1, 1.7)
        return SceneSpec(
            name=name,
            n_frames=n,
            sensor_xyz=xyz,
            sensor_yaw_deg=yaw,
            statics=(
                Ground(0.0, -15.0, 40.0, -20.0, 20.0),
                Pole(14.0, 0.0, 0.25, 0.0, 2.3),
                Disc(14.0, 0.0, 2.5, 3.0),
            ),
            dynamics=(
                MovingBox((0.5, 0.5, 1.75), _linear_track((12.5, -2.4, 0.0), (0.0, 0.25, 0.0), n)),
            ),
            lidar=LidarModel(
                beam_elevations_deg=tuple(np.linspace(-25.0, 15.0, 48)),
                azimuth_step_deg=0.5,
                max_range=40.0,
                noise_sigma=0.0,
            ),
            seed=13 if seed is None else seed,
        )
    if name == "semi_indoor_16beam":
        # Sparse 16-beam sensor in a room with a doorway; people pace within
        # half a meter of the walls, range noise produces below-floor spikes.
        n = 25
        xyz, yaw = _sensor_line(n, -1.0, 0.08, 0.8)
        wall_z = 2.6
        return SceneSpec(
            name=name,
            n_frames=n,
            sensor_xyz=xyz,
            sensor_yaw_deg=yaw,
            statics=(
                Ground(0.0, -12.0, 35.0, -9.0, 9.0),
                Box((-12.3, -8.3, 0.0), (-12.0, 8.3, wall_z)),  # -x wall
                Box((12.0, -8.3, 0.0), (12.3, -1.5, wall_z)),  # +x wall, south of door
                Box((12.0, 1.5, 0.0), (12.3, 8.3, wall_z)),  # +x wall, north of door
                Box((-12.3, -8.3, 0.0), (12.3, -8.0, wall_z)),  # -y wall
                Box((-12.3, 8.0, 0.0), (12.3, 8.3, wall_z)),  # +y wall
                Box((30.0, -10.0, 0.0), (30.4, 10.0, 3.0)),  # far wall through the door
            ),
            dynamics=(
                MovingBox((0.5, 0.5, 1.8), _linear_track((11.3, -5.0, 0.0), (0.0, 0.4, 0.0), n)),
                MovingBox((0.5, 0.5, 1.8), _linear_track((-11.3, 5.0, 0.0), (0.0, -0.4, 0.0), n)),
            ),
            lidar=LidarModel(
                beam_elevations_deg=tuple(np.linspace(-15.0, 15.0, 16)),
                azimuth_step_deg=0.5,
                max_range=50.0,
                noise_sigma=0.03,
            ),
            seed=17 if seed is None else seed,
        )
    if name == "street_mixed":
        # Street canyon with walls, poles, a passing car and a pedestrian;
        # the general-purpose end-to-end scene.
        n = 40
        xyz, yaw = _sensor_line(n, 0.0, 1.25, 1.7)
        poles = tuple(Pole(x, y, 0.15, 0.0, 3.5) for x in (10.0, 25.0, 40.0, 55.0, 70.0, 85.0) for y in (-9.0, 9.0))
        return SceneSpec(
            name=name,
            n_frames=n,
            sensor_xyz=xyz,
            sensor_yaw_deg=yaw,
            statics=(
                Ground(0.0, -20.0, 130.0, -15.0, 15.0),
                Box((-20.0, -12.4, 0.0), (130.0, -12.0, 4.0)),
                Box((-20.0, 12.0, 0.0), (130.0, 12.4, 4.0)),
            )
            + poles,
            dynamics=(
                MovingBox((4.5, 1.9, 1.6), _linear_track((70.0, -3.5, 0.0), (-2.2, 0.0, 0.0), n)),
                MovingBox((0.45, 0.45, 1.75), _linear_track((12.0, 7.0, 0.0), (0.55, 0.0, 0.0), n)),
            ),
            lidar=LidarModel(
                beam_elevations_deg=tuple(np.linspace(-22.0, 4.0, 32)),
                azimuth_step_deg=1.5,
                max_range=50.0,
                noise_sigma=0.01,
            ),
            seed=23 if seed is None else seed,
        )
    raise ValueError(f"unknown preset '{name}'; available: {', '.join(PRESET_NAMES)}")
