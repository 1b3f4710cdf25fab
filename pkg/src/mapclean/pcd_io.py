"""PCD v0.7 reader/writer for the pose-annotated dataset format.

Conventions:

* FIELDS is the subset ``x y z [label]``; any other fields present in a file
  (intensity, ring, time, ...) are parsed and ignored.
* The sensor pose rides in the VIEWPOINT line as ``tx ty tz qw qx qy qz``.
* A ``label`` field (0 static, 1 dynamic) marks a ground-truth cloud; such
  files load as :class:`LabeledCloud` with the viewpoint applied, anything
  else loads as a sensor-frame :class:`ScanFrame`.
* Binary payloads store coordinates as float32 (labels as uint32), so binary
  round-trips are bit-exact at float32 precision. ASCII mode writes the
  float64 values at 9 significant digits.

Rows with non-finite coordinates are dropped; the count is logged and kept
on the returned object as ``n_dropped``.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path

import numpy as np

from .geometry import LabeledCloud, Pose, ScanFrame, as_points

log = logging.getLogger(__name__)

_HEADER_KEYS = (
    "VERSION",
    "FIELDS",
    "SIZE",
    "TYPE",
    "COUNT",
    "WIDTH",
    "HEIGHT",
    "VIEWPOINT",
    "POINTS",
    "DATA",
)

_TYPE_MAP = {
    ("F", 4): "<f4",
    ("F", 8): "<f8",
    ("U", 1): "<u1",
    ("U", 2): "<u2",
    ("U", 4): "<u4",
    ("I", 1): "<i1",
    ("I", 2): "<i2",
    ("I", 4): "<i4",
    ("I", 8): "<i8",
}


class PcdError(ValueError):
    """Raised for malformed or unsupported PCD content."""


def _parse_header(raw: bytes, path) -> tuple[dict, int]:
    header: dict = {}
    offset = 0
    while True:
        nl = raw.find(b"\n", offset)
        if nl < 0:
            raise PcdError(f"{path}: truncated header, no DATA line found")
        line = raw[offset : nl + 1]
        offset = nl + 1
        try:
            text = line.decode("ascii").strip()
        except UnicodeDecodeError:
            raise PcdError(f"{path}: non-ascii bytes in header line {line!r}")
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        key = parts[0].upper()
        if key not in _HEADER_KEYS:
            raise PcdError(f"{path}: unrecognized header line '{text}'")
        header[key] = parts[1:]
        if key == "DATA":
            return header, offset


def _header_int(header: dict, key: str, path) -> int:
    try:
        return int(header[key][0])
    except (KeyError, IndexError, ValueError):
        raise PcdError(f"{path}: missing or malformed {key} header line")


def frame_index_from_name(path) -> int:
    """Sequence index encoded in the file name, e.g. ``004390.pcd`` -> 4390."""
    m = re.search(r"(\d+)", Path(path).stem)
    return int(m.group(1)) if m else 0


def load_pcd(path, index: int | None = None):
    """Load one PCD file.

    Returns a :class:`LabeledCloud` (world frame, viewpoint applied) when a
    ``label`` field is present, otherwise a :class:`ScanFrame` with the
    viewpoint attached as its pose and points kept in the sensor frame.
    """
    path = Path(path)
    raw = path.read_bytes()
    if not (raw.startswith(b"#") or raw.upper().startswith(b"VERSION")):
        raise PcdError(f"{path}: not a PCD file (header must start with '#' or VERSION)")
    header, payload_offset = _parse_header(raw, path)

    if "FIELDS" not in header:
        raise PcdError(f"{path}: missing FIELDS header line")
    fields = header["FIELDS"]
    for needed in ("x", "y", "z"):
        if needed not in fields:
            raise PcdError(f"{path}: FIELDS {' '.join(fields)} lacks '{needed}'")
    n_fields = len(fields)
    sizes = header.get("SIZE", [])
    types = header.get("TYPE", [])
    counts = header.get("COUNT", ["1"] * n_fields)
    if len(sizes) != n_fields or len(types) != n_fields or len(counts) != n_fields:
        raise PcdError(f"{path}: SIZE/TYPE/COUNT lengths disagree with FIELDS")
    if any(c != "1" for c in counts):
        raise PcdError(f"{path}: COUNT != 1 is not supported")

    n_points = _header_int(header, "POINTS", path)
    width = _header_int(header, "WIDTH", path)
    height = _header_int(header, "HEIGHT", path)
    if width * height != n_points:
        raise PcdError(f"{path}: WIDTH*HEIGHT != POINTS")

    vp = header.get("VIEWPOINT")
    if vp is None or len(vp) != 7:
        raise PcdError(f"{path}: VIEWPOINT must hold 'tx ty tz qw qx qy qz'")
    try:
        vp_vals = [float(v) for v in vp]
    except ValueError:
        raise PcdError(f"{path}: non-numeric VIEWPOINT entry in '{' '.join(vp)}'")
    pose = Pose(np.array(vp_vals[:3]), np.array(vp_vals[3:]))

    encoding = header["DATA"][0].lower() if header["DATA"] else ""
    try:
        dtype = np.dtype(
            [
                (name, _TYPE_MAP[(t.upper(), int(s))])
                for name, t, s in zip(fields, types, sizes)
            ]
        )
    except KeyError as exc:
        raise PcdError(f"{path}: unsupported field TYPE/SIZE combination {exc}")

    if encoding == "ascii":
        rows = raw[payload_offset:].decode("ascii", errors="replace").split("\n")
        values = []
        for row in rows:
            row = row.strip()
            if not row:
                continue
            cols = row.split()
            if len(cols) != n_fields:
                raise PcdError(f"{path}: ascii row '{row}' has {len(cols)} columns, expected {n_fields}")
            values.append(cols)
        if len(values) != n_points:
            raise PcdError(f"{path}: POINTS says {n_points} but ascii payload has {len(values)} rows")
        arr = np.empty(n_points, dtype=dtype)
        cols_t = list(zip(*values)) if values else [[] for _ in fields]
        for i, name in enumerate(fields):
            arr[name] = np.asarray(cols_t[i], dtype=np.float64).astype(dtype[name])
    elif encoding == "binary":
        itemsize = dtype.itemsize
        payload = raw[payload_offset : payload_offset + n_points * itemsize]
        if len(payload) < n_points * itemsize:
            raise PcdError(f"{path}: binary payload shorter than POINTS*itemsize")
        arr = np.frombuffer(payload, dtype=dtype, count=n_points)
    else:
        raise PcdError(f"{path}: unsupported DATA encoding '{encoding}'")

    pts = np.stack(
        [arr["x"].astype(np.float64), arr["y"].astype(np.float64), arr["z"].astype(np.float64)],
        axis=1,
    )
    finite = np.all(np.isfinite(pts), axis=1)
    n_dropped = int(pts.shape[0] - finite.sum())
    if n_dropped:
        log.warning("%s: dropped %d non-finite points", path, n_dropped)
        pts = pts[finite]
    if pts.shape[0] == 0:
        raise PcdError(f"{path}: no finite points")

    if "label" in fields:
        labels = (np.asarray(arr["label"])[finite] != 0).astype(np.uint8)
        return LabeledCloud(pose.transform(pts), labels, n_dropped=n_dropped)
    if index is None:
        index = frame_index_from_name(path)
    return ScanFrame(pts, pose, index, n_dropped=n_dropped)


def _fmt(x: float) -> str:
    return format(x, ".9g")


def save_pcd(points, pose: Pose, path, encoding: str = "binary", labels=None) -> None:
    """Write points (and optional labels) with the pose in VIEWPOINT."""
    pts = as_points(points)
    if pts.shape[0] == 0:
        raise ValueError("refusing to write an empty cloud")
    if encoding not in ("ascii", "binary"):
        raise ValueError(f"encoding must be 'ascii' or 'binary', got '{encoding}'")
    with_labels = labels is not None
    if with_labels:
        labels = np.asarray(labels, dtype=np.uint32).reshape(-1)
        if labels.shape[0] != pts.shape[0]:
            raise ValueError("labels length must match points length")

    fields = ["x", "y", "z"] + (["label"] if with_labels else [])
    sizes = ["4", "4", "4"] + (["4"] if with_labels else [])
    types = ["F", "F", "F"] + (["U"] if with_labels else [])
    n = pts.shape[0]
    vp = " ".join(_fmt(v) for v in pose.as_row())
    header = (
        "# .PCD v0.7 - Point Cloud Data file format\n"
        "VERSION 0.7\n"
        f"FIELDS {' '.join(fields)}\n"
        f"SIZE {' '.join(sizes)}\n"
        f"TYPE {' '.join(types)}\n"
        f"COUNT {' '.join(['1'] * len(fields))}\n"
        f"WIDTH {n}\n"
        "HEIGHT 1\n"
        f"VIEWPOINT {vp}\n"
        f"POINTS {n}\n"
        f"DATA {encoding}\n"
    )

    path = Path(path)
    if encoding == "ascii":
        lines = []
        for i in range(n):
            row = f"{_fmt(pts[i, 0])} {_fmt(pts[i, 1])} {_fmt(pts[i, 2])}"
            if with_labels:
                row += f" {int(labels[i])}"
            lines.append(row)
        path.write_text(header + "\n".join(lines) + "\n")
    else:
        dtype = np.dtype(
            [(f, "<f4") for f in ("x", "y", "z")] + ([("label", "<u4")] if with_labels else [])
        )
        arr = np.empty(n, dtype=dtype)
        arr["x"] = pts[:, 0].astype(np.float32)
        arr["y"] = pts[:, 1].astype(np.float32)
        arr["z"] = pts[:, 2].astype(np.float32)
        if with_labels:
            arr["label"] = labels
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(arr.tobytes())
