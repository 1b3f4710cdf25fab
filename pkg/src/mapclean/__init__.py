"""Benchmark toolkit for dynamic-point removal in LiDAR point cloud maps."""

from .geometry import DYNAMIC, STATIC, LabeledCloud, Pose, ScanFrame, transform_to_world
from .pcd_io import PcdError, load_pcd, save_pcd
from .voxel import OccupancyGrid, VoxelKey, integrate_scan, occupancy, raycast, voxel_key
from .neighbors import NeighborIndex
from .preprocess import PlaneModel, ransac_ground, sor_filter
from .removert import RangeImage, RemovertConfig, detect_dynamic, diff_images, project, run_removert
from .erasor import BinGrid, ErasorConfig, build_bins, candidate_bins, rgpf, run_erasor
from .octomap import OctomapConfig, count_rays, run_octomap
from .metrics import (
    EvalReport,
    accuracy,
    associate,
    build_report,
    fn_distance_distribution,
    runtime_stats,
)
from .synth import PRESET_NAMES, LidarModel, SceneSpec, preset, simulate

__version__ = "0.1.0"
