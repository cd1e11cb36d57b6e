"""Flat array-in/array-out wrappers over the raygroup geometry kernels.

Every function takes plain numeric arrays by documented shape convention
(points (n, 3), features (n, C), indices (m,), masks (N, K)), validates
them at the boundary, copies them (no buffer is ever shared across the
boundary in either direction), and delegates to the core library.  Each
wrapped call is value-equal to the corresponding core call.
"""

from __future__ import annotations

import sys

import numpy as np

import raygroup as _core
from raygroup.errors import ValidationError
from raygroup.grouping import mask_labels_for_positions as _mask_labels
from raygroup.sampling import SampleSource as _SampleSource
from raygroup.sampling import fps_indices as _fps_indices

__all__ = [
    "bind_all",
    "ray_directions",
    "emit_rays",
    "farthest_point_sampling",
    "foreground_biased_sampling",
    "coarse_anchors",
    "fine_anchors",
    "ball_query",
    "anchor_mask_labels",
    "iou3d",
    "nms3d",
    "average_precision",
]

__version__ = "0.1.0"


def _array(a, shape, name: str, dtype=np.float64) -> np.ndarray:
    """Copy ``a`` as ``dtype`` and check it against a shape pattern
    (-1 entries are wildcards).  Raises ValidationError on mismatch."""
    try:
        arr = np.array(a, dtype=dtype, copy=True)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{name}: cannot convert to {np.dtype(dtype).name}: {e}") from e
    if arr.size == 0 and len(shape) > 0:
        arr = arr.reshape(tuple(0 if s == -1 else s for s in shape))
    if arr.ndim != len(shape) or any(
        s != -1 and arr.shape[i] != s for i, s in enumerate(shape)
    ):
        want = tuple("n" if s == -1 else s for s in shape)
        raise ValidationError(f"{name}: expected shape {want}, got {arr.shape}")
    return arr


def _scalar(v, name: str) -> float:
    try:
        return float(v)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{name}: not a real number: {e}") from e


def ray_directions(P: int, azimuth_factor: int = 4) -> np.ndarray:
    """All (polar, azimuth) pairs in canonical order as an (N, 2) array."""
    return np.array(_core.ray_directions(int(P), int(azimuth_factor)), dtype=np.float64)


def emit_rays(origin, scale, P: int, azimuth_factor: int = 4):
    """Unit directions and endpoints of the bundle: ((N, 3), (N, 3))."""
    origin = _array(origin, (3,), "origin")
    bundle = _core.emit_rays(origin, _scalar(scale, "scale"), int(P), int(azimuth_factor))
    return bundle.directions.copy(), bundle.endpoints().copy()


def farthest_point_sampling(points, m: int, seed_index: int = 0) -> np.ndarray:
    """Greedy max-min selection order as an (m,) int64 array."""
    points = _array(points, (-1, 3), "points")
    return _fps_indices(points, int(m), int(seed_index)).copy()


def foreground_biased_sampling(points, scores, kappa: int, alpha: int, beta: int):
    """Selected indices plus a boolean foreground-sourced mask."""
    points = _array(points, (-1, 3), "points")
    scores = _array(scores, (-1,), "scores")
    result = _core.foreground_biased_sampling(
        points, scores, int(kappa), int(alpha), int(beta)
    )
    fg = np.array([s is _SampleSource.FBS_FOREGROUND for s in result.sources])
    return result.indices.copy(), fg


def coarse_anchors(origin, scale, P: int, K_c: int, azimuth_factor: int = 4) -> np.ndarray:
    """Stratified anchor positions, (N, K_c, 3)."""
    origin = _array(origin, (3,), "origin")
    bundle = _core.emit_rays(origin, _scalar(scale, "scale"), int(P), int(azimuth_factor))
    return _core.coarse_anchors(bundle, int(K_c)).positions.copy()


def fine_anchors(masks, origin, scale, P: int, K_f: int, azimuth_factor: int = 4) -> np.ndarray:
    """Inverse-CDF anchor positions from binary coarse masks, (N, K_f, 3)."""
    origin = _array(origin, (3,), "origin")
    masks = _array(masks, (-1, -1), "masks", dtype=np.int64)
    bundle = _core.emit_rays(origin, _scalar(scale, "scale"), int(P), int(azimuth_factor))
    return _core.fine_anchors(masks, int(K_f), bundle).positions.copy()


def ball_query(points, center, radius, max_k: int) -> np.ndarray:
    """Indices of points within radius of center, nearest first, (k,)."""
    points = _array(points, (-1, 3), "points")
    center = _array(center, (3,), "center")
    index = _core.build_grid(points, _scalar(radius, "radius"))
    return _core.ball_query(index, center, _scalar(radius, "radius"), int(max_k)).copy()


def anchor_mask_labels(anchor_positions, points, instance_ids, radius, assigned_box: int) -> np.ndarray:
    """Existence-test labels for (N, K, 3) anchor positions, (N, K) int64."""
    anchors = _array(anchor_positions, (-1, -1, 3), "anchor_positions")
    points = _array(points, (-1, 3), "points")
    ids = _array(instance_ids, (-1,), "instance_ids", dtype=np.int64)
    if len(ids) != len(points):
        raise ValidationError(
            f"instance_ids: expected {len(points)} entries, got {len(ids)}"
        )
    flat = _mask_labels(
        anchors.reshape(-1, 3), points, ids, _scalar(radius, "radius"), int(assigned_box)
    )
    return flat.reshape(anchors.shape[0], anchors.shape[1]).copy()


def iou3d(center_a, size_a, center_b, size_b) -> float:
    """Intersection-over-union of two axis-aligned boxes."""
    a = _core.Box3D(_array(center_a, (3,), "center_a"), _array(size_a, (3,), "size_a"))
    b = _core.Box3D(_array(center_b, (3,), "center_b"), _array(size_b, (3,), "size_b"))
    return _core.iou3d(a, b)


def _detections(centers, sizes, scores, class_ids, prefix: str):
    centers = _array(centers, (-1, 3), f"{prefix}_centers")
    sizes = _array(sizes, (-1, 3), f"{prefix}_sizes")
    scores = _array(scores, (-1,), f"{prefix}_scores")
    class_ids = _array(class_ids, (-1,), f"{prefix}_class_ids", dtype=np.int64)
    if not (len(centers) == len(sizes) == len(scores) == len(class_ids)):
        raise ValidationError(f"{prefix}: center/size/score/class arrays must align")
    return [
        _core.Detection(
            _core.Box3D(centers[i], sizes[i], int(class_ids[i])),
            float(scores[i]),
            int(class_ids[i]),
        )
        for i in range(len(centers))
    ]


def nms3d(centers, sizes, scores, class_ids, iou_threshold) -> np.ndarray:
    """Kept detection indices after greedy class-wise suppression, (k,)."""
    dets = _detections(centers, sizes, scores, class_ids, "detections")
    return _core.nms3d(dets, _scalar(iou_threshold, "iou_threshold")).copy()


def average_precision(
    det_centers, det_sizes, det_scores, det_classes,
    gt_centers, gt_sizes, gt_classes,
    iou_threshold, class_id: int,
):
    """(recall, precision, ap) for one class at one IoU threshold."""
    dets = _detections(det_centers, det_sizes, det_scores, det_classes, "detections")
    gt_centers = _array(gt_centers, (-1, 3), "gt_centers")
    gt_sizes = _array(gt_sizes, (-1, 3), "gt_sizes")
    gt_classes = _array(gt_classes, (-1,), "gt_classes", dtype=np.int64)
    if not (len(gt_centers) == len(gt_sizes) == len(gt_classes)):
        raise ValidationError("gt: center/size/class arrays must align")
    boxes = [
        _core.Box3D(gt_centers[i], gt_sizes[i], int(gt_classes[i]))
        for i in range(len(gt_centers))
    ]
    curve = _core.average_precision(
        dets, boxes, _scalar(iou_threshold, "iou_threshold"), int(class_id)
    )
    return curve.recall.copy(), curve.precision.copy(), curve.ap


def bind_all():
    """The flat function namespace (this module)."""
    return sys.modules[__name__]
