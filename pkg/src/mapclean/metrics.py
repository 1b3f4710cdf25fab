"""Point-wise evaluation of cleaning results against labeled ground truth.

Dynamic is the positive class throughout: a true positive is a ground-truth
dynamic point the method also removed, a false negative is a dynamic point
left in the static map.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import DYNAMIC, STATIC, LabeledCloud, as_points
from .voxel import pack_keys

FN_HIST_BINS = 50
FN_HIST_MAX_M = 1.0
FN_DECILES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def aa_of(sa: float, da: float) -> float:
    """Associated accuracy: geometric mean of static and dynamic accuracy."""
    return math.sqrt(sa * da)


def confusion(gt_labels, pred_labels) -> tuple[int, int, int, int]:
    """(TP, FP, TN, FN) with dynamic as the positive class."""
    gt = np.asarray(gt_labels).reshape(-1)
    pred = np.asarray(pred_labels).reshape(-1)
    if gt.shape != pred.shape:
        raise ValueError(f"label lengths differ: {gt.shape[0]} vs {pred.shape[0]}")
    gt_dyn = gt == DYNAMIC
    pred_dyn = pred == DYNAMIC
    tp = int(np.sum(gt_dyn & pred_dyn))
    fp = int(np.sum(~gt_dyn & pred_dyn))
    tn = int(np.sum(~gt_dyn & ~pred_dyn))
    fn = int(np.sum(gt_dyn & ~pred_dyn))
    return tp, fp, tn, fn


def accuracy(gt_labels, pred_labels) -> tuple[float, float, float]:
    """(SA, DA, AA) percentages.

    SA is the fraction of ground-truth static points predicted static, DA
    the fraction of dynamic points predicted dynamic, AA their geometric
    mean. Ground truth must contain both classes.
    """
    tp, fp, tn, fn = confusion(gt_labels, pred_labels)
    n_static = tn + fp
    n_dynamic = tp + fn
    if n_static == 0:
        raise ValueError("ground truth has no static points")
    if n_dynamic == 0:
        raise ValueError("ground truth has no dynamic points")
    sa = 100.0 * tn / n_static
    da = 100.0 * tp / n_dynamic
    return sa, da, aa_of(sa, da)


def associate(gt: LabeledCloud, prediction, resolution: float | None = None) -> np.ndarray:
    """Predicted label per ground-truth point.

    ``prediction`` is either an index-aligned label mask (passed through) or
    an exported static cloud, in which case each ground-truth point takes
    static iff its voxel (at ``resolution``) appears in the export; points
    in absent voxels were removed from the map and count as dynamic.
    """
    pred = np.asarray(prediction)
    if pred.ndim == 1:
        if pred.shape[0] != len(gt):
            raise ValueError(f"mask length {pred.shape[0]} != ground truth length {len(gt)}")
        return pred.astype(np.uint8)
    static_pts = as_points(pred)
    if resolution is None or resolution <= 0:
        raise ValueError("grid association needs a positive resolution")
    if static_pts.shape[0] == 0:
        return np.full(len(gt), DYNAMIC, dtype=np.uint8)
    lo_a, hi_a = gt.points.min(axis=0), gt.points.max(axis=0)
    lo_b, hi_b = static_pts.min(axis=0), static_pts.max(axis=0)
    if np.any(hi_b < lo_a) or np.any(hi_a < lo_b):
        raise ValueError("ground truth and output bounding boxes are disjoint; frames misaligned?")
    static_cells = np.unique(pack_keys(static_pts, resolution))
    gt_cells = pack_keys(gt.points, resolution)
    present = np.isin(gt_cells, static_cells)
    return np.where(present, STATIC, DYNAMIC).astype(np.uint8)


@dataclass(frozen=True)
class FnDistribution:
    """Distances from each false negative to its nearest true positive."""

    distances: np.ndarray
    hist_upper_edges: np.ndarray  # last edge is inf (overflow bin)
    hist_counts: np.ndarray
    deciles: dict[float, float] | None  # None when there are no FNs
    status: str  # "ok" | "no_false_negatives"

    @property
    def q10(self) -> float | None:
        return None if self.deciles is None else self.deciles[0.1]


def _exact_nearest_distances(queries: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Min Euclidean distance per query, bit-reproducible vs a full scan."""
    tree = cKDTree(targets)
    d_upper, _ = tree.query(queries, k=1)
    out = np.empty(queries.shape[0])
    for i in range(queries.shape[0]):
        cand = tree.query_ball_point(queries[i], float(d_upper[i]) * (1.0 + 1e-12) + 1e-300)
        if not cand:
            cand = [int(tree.query(queries[i], k=1)[1])]
        diff = targets[np.asarray(cand, dtype=np.int64)] - queries[i]
        out[i] = np.sqrt((diff * diff).sum(axis=1)).min()
    return out


def fn_distance_distribution(
    gt: LabeledCloud,
    pred_labels,
    n_bins: int = FN_HIST_BINS,
    max_distance: float = FN_HIST_MAX_M,
) -> FnDistribution:
    """Histogram and decile quantiles of FN-to-nearest-TP distances.

    Requires at least one true positive; with zero false negatives the
    histogram is empty and the quantiles are flagged undefined.
    """
    pred = np.asarray(pred_labels).reshape(-1)
    if pred.shape[0] != len(gt):
        raise ValueError("prediction length does not match ground truth")
    gt_dyn = gt.labels == DYNAMIC
    tp_mask = gt_dyn & (pred == DYNAMIC)
    fn_mask = gt_dyn & (pred == STATIC)
    if not tp_mask.any():
        raise ValueError("no true positives: FN distance distribution is undefined")

    edges = np.linspace(0.0, max_distance, n_bins + 1)
    upper = np.append(edges[1:], np.inf)
    if not fn_mask.any():
        return FnDistribution(
            distances=np.empty(0),
            hist_upper_edges=upper,
            hist_counts=np.zeros(n_bins + 1, dtype=np.int64),
            deciles=None,
            status="no_false_negatives",
        )

    dists = _exact_nearest_distances(gt.points[fn_mask], gt.points[tp_mask])
    counts, _ = np.histogram(dists, bins=edges)
    counts = np.append(counts, int((dists > max_distance).sum()))
    deciles = {q: float(np.quantile(dists, q)) for q in FN_DECILES}
    return FnDistribution(
        distances=dists,
        hist_upper_edges=upper,
        hist_counts=counts.astype(np.int64),
        deciles=deciles,
        status="ok",
    )


def runtime_stats(frame_times) -> tuple[float, float]:
    """Sample mean and sample standard deviation of per-frame seconds."""
    t = np.asarray(frame_times, dtype=np.float64).reshape(-1)
    if t.shape[0] < 2:
        raise ValueError("runtime stats need at least 2 timed frames")
    return float(t.mean()), float(t.std(ddof=1))


@dataclass
class EvalReport:
    """One method run's point-wise scores, error distribution, and runtime."""

    method: str
    sa: float
    da: float
    aa: float
    tp: int
    fp: int
    tn: int
    fn: int
    fn_hist_upper_edges: list[float]
    fn_hist_counts: list[int]
    fn_deciles: dict[str, float] | None
    fn_status: str  # "ok" | "no_false_negatives" | "no_true_positives"
    runtime_mean_s: float
    runtime_std_s: float

    CSV_FIELDS = (
        "method", "sa", "da", "aa", "tp", "fp", "tn", "fn",
        "runtime_mean_s", "runtime_std_s", "fn_status", "fn_q10_m",
    )

    @property
    def fn_q10(self) -> float | None:
        if self.fn_deciles is None:
            return None
        return self.fn_deciles["0.1"]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "sa": self.sa,
            "da": self.da,
            "aa": self.aa,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "fn_distance": {
                "status": self.fn_status,
                # the overflow bin's inf edge is spelled out for strict JSON
                "hist_upper_edges_m": [e if np.isfinite(e) else "inf" for e in self.fn_hist_upper_edges],
                "hist_counts": self.fn_hist_counts,
                "deciles_m": self.fn_deciles,
            },
            "runtime_mean_s": self.runtime_mean_s,
            "runtime_std_s": self.runtime_std_s,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self) -> str:
        q10 = self.fn_q10
        vals = [
            self.method,
            f"{self.sa:.6f}", f"{self.da:.6f}", f"{self.aa:.6f}",
            str(self.tp), str(self.fp), str(self.tn), str(self.fn),
            f"{self.runtime_mean_s:.9g}", f"{self.runtime_std_s:.9g}",
            self.fn_status,
            "" if q10 is None else f"{q10:.9g}",
        ]
        return ",".join(vals)

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.CSV_FIELDS)

    def fn_hist_csv(self) -> str:
        lines = ["bin_upper_edge_m,count"]
        for edge, count in zip(self.fn_hist_upper_edges, self.fn_hist_counts):
            edge_s = "inf" if np.isinf(edge) else f"{edge:.9g}"
            lines.append(f"{edge_s},{count}")
        return "\n".join(lines) + "\n"


def build_report(method: str, gt: LabeledCloud, pred_labels, frame_times) -> EvalReport:
    """Assemble the full report; FN-distance edge cases are flagged, not fatal."""
    pred = associate(gt, np.asarray(pred_labels))
    sa, da, aa = accuracy(gt.labels, pred)
    tp, fp, tn, fn = confusion(gt.labels, pred)
    mean_s, std_s = runtime_stats(frame_times)
    try:
        dist = fn_distance_distribution(gt, pred)
        edges = [float(e) for e in dist.hist_upper_edges]
        counts = [int(c) for c in dist.hist_counts]
        deciles = None if dist.deciles is None else {f"{q:.1f}": v for q, v in dist.deciles.items()}
        status = dist.status
    except ValueError:
        edges_arr = np.append(np.linspace(0.0, FN_HIST_MAX_M, FN_HIST_BINS + 1)[1:], np.inf)
        edges = [float(e) for e in edges_arr]
        counts = [0] * (FN_HIST_BINS + 1)
        deciles = None
        status = "no_true_positives"
    return EvalReport(
        method=method,
        sa=sa,
        da=da,
        aa=aa,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        fn_hist_upper_edges=edges,
        fn_hist_counts=counts,
        fn_deciles=deciles,
        fn_status=status,
        runtime_mean_s=mean_s,
        runtime_std_s=std_s,
    )
