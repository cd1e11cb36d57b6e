"""3D detection evaluation: IoU, NMS, average precision, recall diagnostics.

Matching follows the usual protocol: detections are visited in descending
score order (ties by lowest index), each ground-truth box can satisfy at
most one detection, and duplicates of an already-matched box count as
false positives.  AP defaults to the area under the monotonized
precision-recall curve; an 11-point interpolation is available for
cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyEvaluation, InvalidParameter
from .grid import ball_query_batch, build_grid
from .sampling import AnchorSet
from .scene import Box3D, Detection, PointCloud, SceneAnnotation, _freeze

__all__ = [
    "PRCurve",
    "iou3d",
    "nms3d",
    "average_precision",
    "mean_average_precision",
    "foreground_recall",
    "surface_point_recall",
]


@dataclass(frozen=True, eq=False)
class PRCurve:
    """A precision-recall curve with its average precision and GT count."""

    recall: np.ndarray
    precision: np.ndarray
    ap: float
    n_gt: int

    def __post_init__(self):
        r = np.asarray(self.recall, dtype=np.float64).reshape(-1)
        p = np.asarray(self.precision, dtype=np.float64).reshape(-1)
        if len(r) != len(p):
            raise InvalidParameter("recall and precision must be aligned")
        if len(r) > 1 and np.any(np.diff(r) < 0):
            raise InvalidParameter("recall must be non-decreasing")
        if not (0.0 <= self.ap <= 1.0):
            raise InvalidParameter(f"ap must be in [0, 1], got {self.ap}")
        object.__setattr__(self, "recall", _freeze(r))
        object.__setattr__(self, "precision", _freeze(p))
        object.__setattr__(self, "ap", float(self.ap))
        object.__setattr__(self, "n_gt", int(self.n_gt))


def iou3d(a: Box3D, b: Box3D) -> float:
    """Exact intersection-over-union of two axis-aligned boxes.

    All three volumes are computed from the corner representation so that
    identical boxes yield exactly 1 even when center +- size/2 rounds.
    """
    a_lo, a_hi = a.min_corner, a.max_corner
    b_lo, b_hi = b.min_corner, b.max_corner
    lo = np.maximum(a_lo, b_lo)
    hi = np.minimum(a_hi, b_hi)
    edges = np.maximum(hi - lo, 0.0)
    inter = float(np.prod(edges))
    va = float(np.prod(a_hi - a_lo))
    vb = float(np.prod(b_hi - b_lo))
    union = va + vb - inter
    return min(inter / union, 1.0) if union > 0.0 else 0.0


def nms3d(detections: Sequence[Detection], iou_threshold: float) -> np.ndarray:
    """Greedy class-wise suppression; returns kept indices, best first.

    A detection is kept iff its IoU with every already-kept detection of
    the same class is <= the threshold.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise InvalidParameter(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    dets = list(detections)
    scores = np.array([d.score for d in dets], dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    kept: list[int] = []
    for i in order:
        d = dets[i]
        ok = all(
            dets[j].class_id != d.class_id or iou3d(d.box, dets[j].box) <= iou_threshold
            for j in kept
        )
        if ok:
            kept.append(int(i))
    return np.asarray(kept, dtype=np.int64)


def _ap_from_pr(recall: np.ndarray, precision: np.ndarray, eleven_point: bool) -> float:
    if len(recall) == 0:
        return 0.0
    if eleven_point:
        total = 0.0
        for r in np.linspace(0.0, 1.0, 11):
            mask = recall >= r
            total += float(precision[mask].max()) if mask.any() else 0.0
        return total / 11.0
    # Area under the monotonized curve: precision at recall r is the max
    # precision achieved at any recall >= r.
    r = np.concatenate([[0.0], recall])
    p = np.concatenate([[0.0], precision])
    p = np.maximum.accumulate(p[::-1])[::-1]
    return float(np.sum((r[1:] - r[:-1]) * p[1:]))


def average_precision(
    detections: Sequence[Detection],
    gt_boxes: Sequence[Box3D],
    iou_threshold: float,
    class_id: int,
    eleven_point: bool = False,
) -> PRCurve:
    """Score-ordered greedy matching for one class at one IoU threshold."""
    gts = [b for b in gt_boxes if b.class_id == class_id]
    dets = [(i, d) for i, d in enumerate(detections) if d.class_id == class_id]
    n_gt = len(gts)
    if not dets:
        return PRCurve(np.empty(0), np.empty(0), 0.0, n_gt)

    scores = np.array([d.score for _, d in dets], dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    matched = np.zeros(n_gt, dtype=bool)
    tp = np.zeros(len(dets), dtype=np.float64)
    fp = np.zeros(len(dets), dtype=np.float64)
    for rank, oi in enumerate(order):
        _, det = dets[oi]
        best, best_iou = -1, 0.0
        for g, gt in enumerate(gts):
            v = iou3d(det.box, gt)
            if v > best_iou:
                best, best_iou = g, v
        if best >= 0 and best_iou >= iou_threshold and not matched[best]:
            matched[best] = True
            tp[rank] = 1.0
        else:
            fp[rank] = 1.0
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(fp)
    recall = tp_cum / n_gt if n_gt else np.zeros_like(tp_cum)
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1.0)
    ap = _ap_from_pr(recall, precision, eleven_point) if n_gt else 0.0
    return PRCurve(recall, precision, ap, n_gt)


def mean_average_precision(per_class: dict[int, PRCurve]) -> float:
    """Unweighted mean AP over the classes that have ground truth."""
    aps = [c.ap for c in per_class.values() if c.n_gt > 0]
    if not aps:
        raise EmptyEvaluation("no class has ground-truth instances")
    return float(np.mean(aps))


def foreground_recall(selected_indices, annotation: SceneAnnotation) -> float:
    """Fraction of the selected points that lie on annotated objects."""
    idx = np.asarray(selected_indices, dtype=np.int64).reshape(-1)
    if len(idx) == 0:
        raise InvalidParameter("selection is empty")
    n = len(annotation.instance_ids)
    if np.any(idx < 0) or np.any(idx >= n):
        raise InvalidParameter("selected index out of range")
    return float(np.mean(annotation.instance_ids[idx] >= 0))


def surface_point_recall(
    anchors: AnchorSet | Sequence[AnchorSet],
    radius: float,
    annotation: SceneAnnotation,
    cloud: PointCloud,
    assigned_box: int,
) -> float:
    """Fraction of the assigned object's surface points covered by the
    union of the anchors' ball regions.

    Accepts one anchor set or several (their regions are unioned).
    Returns 0.0 when there are no anchors or the object has no points.
    """
    if not (radius > 0.0):
        raise InvalidParameter(f"radius must be > 0, got {radius}")
    if not (0 <= assigned_box < len(annotation.boxes)):
        raise InvalidParameter(f"assigned_box {assigned_box} is not a valid box index")
    sets = [anchors] if isinstance(anchors, AnchorSet) else list(anchors)
    positions = [s.flat_positions() for s in sets if s.N * s.K > 0]
    obj_points = cloud.positions[annotation.instance_ids == assigned_box]
    if len(obj_points) == 0 or not positions:
        return 0.0
    anchor_pos = np.concatenate(positions, axis=0)
    index = build_grid(anchor_pos, radius)
    _, counts = ball_query_batch(index, obj_points, radius, max_k=1)
    return float(np.mean(counts > 0))
