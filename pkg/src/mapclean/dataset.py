"""Dataset directory layout.

A dataset is a directory holding ``pcd/`` with zero-padded sequential frame
files plus ``gt_cloud.pcd``, the fully labeled ground-truth map, and a
``manifest.json`` describing how it was generated. The ground-truth cloud is
the accumulation of the frames in frame order, which is what makes method
output masks index-aligned to it.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .geometry import LabeledCloud, ScanFrame
from .pcd_io import PcdError, frame_index_from_name, load_pcd, save_pcd

GT_NAME = "gt_cloud.pcd"
FRAME_DIR = "pcd"
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class Dataset:
    frames: tuple[ScanFrame, ...]
    gt: LabeledCloud | None
    manifest: dict
    root: Path


def write_dataset(root, frames, gt: LabeledCloud, manifest: dict, force: bool = False) -> Path:
    root = Path(root)
    if root.exists() and any(root.iterdir()) and not force:
        raise FileExistsError(f"{root} exists and is not empty (use force to overwrite)")
    frame_dir = root / FRAME_DIR
    frame_dir.mkdir(parents=True, exist_ok=True)
    for frame in frames:
        save_pcd(frame.points, frame.pose, frame_dir / f"{frame.index:06d}.pcd", "binary")
    from .geometry import Pose

    save_pcd(gt.points, Pose.identity(), root / GT_NAME, "binary", labels=gt.labels)
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def load_dataset(root, require_gt: bool = True) -> Dataset:
    root = Path(root)
    frame_dir = root / FRAME_DIR
    if not frame_dir.is_dir():
        raise FileNotFoundError(f"{root} has no '{FRAME_DIR}/' directory")
    paths = sorted(frame_dir.glob("*.pcd"))
    if not paths:
        raise FileNotFoundError(f"{frame_dir} holds no .pcd frames")

    frames = []
    last_index = -1
    for path in paths:
        index = frame_index_from_name(path)
        if index <= last_index:
            raise PcdError(
                f"{path}: frame index {index} not strictly increasing (previous {last_index})"
            )
        last_index = index
        frame = load_pcd(path, index=index)
        if not isinstance(frame, ScanFrame):
            raise PcdError(f"{path}: frame files must not carry a label field")
        frames.append(frame)

    gt = None
    gt_path = root / GT_NAME
    if gt_path.exists():
        gt = load_pcd(gt_path)
        if not isinstance(gt, LabeledCloud):
            raise PcdError(f"{gt_path}: ground-truth cloud must carry a label field")
    elif require_gt:
        raise FileNotFoundError(f"{root} has no {GT_NAME} (required for mask output and eval)")

    manifest = {}
    manifest_path = root / MANIFEST_NAME
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
    return Dataset(tuple(frames), gt, manifest, root)


def dataset_sha256(root) -> str:
    """Content hash over the frame files and the ground-truth cloud."""
    root = Path(root)
    h = hashlib.sha256()
    for path in sorted((root / FRAME_DIR).glob("*.pcd")):
        h.update(path.name.encode())
        h.update(hashlib.sha256(path.read_bytes()).digest())
    gt_path = root / GT_NAME
    if gt_path.exists():
        h.update(hashlib.sha256(gt_path.read_bytes()).digest())
    return h.hexdigest()
