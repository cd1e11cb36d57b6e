"""Scene data types and file I/O.

A scene on disk is a pair of sidecar files sharing one stem:

* ``<name>.pts`` -- one point per line, ASCII ``x y z [f1 ... fC]`` with
  ``.`` as the decimal separator.
* ``<name>.ann`` -- JSON with ``boxes`` (center/size/class_id records),
  ``instance_ids`` (one per point, -1 for background) and ``feature_dim``.

Floats are written with their shortest round-tripping decimal form, so
save -> load is bit-exact.  All coordinates are float64 everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IoError, ParseError, ValidationError

#: Tolerance (meters) for the point-in-box membership invariant; absorbs
#: serialization rounding.
POINT_IN_BOX_TOL = 1e-6


def _fmt(x: float) -> str:
    """Shortest decimal that parses back to the identical float64."""
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def _as_points(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError(f"{name} must have shape (n, 3), got {arr.shape}")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PointCloud:
    """Positions (n, 3) in meters plus optional per-point features (n, C).

    Immutable after construction; the backing arrays are read-only.
    """

    positions: np.ndarray
    features: np.ndarray | None = None

    def __post_init__(self):
        pos = _as_points(self.positions, "positions")
        if not np.all(np.isfinite(pos)):
            bad = int(np.flatnonzero(~np.isfinite(pos).all(axis=1))[0])
            raise ValidationError(f"point {bad} has a non-finite coordinate")
        object.__setattr__(self, "positions", _freeze(pos))
        if self.features is not None:
            feat = np.asarray(self.features, dtype=np.float64)
            if feat.size == 0:
                feat = feat.reshape(len(pos), 0)
            if feat.ndim != 2 or feat.shape[0] != len(pos):
                raise ValidationError(
                    f"features must have shape ({len(pos)}, C), got {feat.shape}"
                )
            if not np.all(np.isfinite(feat)):
                raise ValidationError("features contain non-finite values")
            object.__setattr__(self, "features", _freeze(feat))

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def feature_dim(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    def with_features(self, features: np.ndarray) -> "PointCloud":
        return PointCloud(self.positions, features)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        if not np.array_equal(self.positions, other.positions):
            return False
        if (self.features is None) != (other.features is None):
            return False
        return self.features is None or np.array_equal(self.features, other.features)


@dataclass(frozen=True)
class Box3D:
    """Axis-aligned box: center (m), per-axis full extents (m), class label."""

    center: np.ndarray
    size: np.ndarray
    class_id: int = 0

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(3)
        size = np.asarray(self.size, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(center)) or not np.all(np.isfinite(size)):
            raise ValidationError("box center/size must be finite")
        if np.any(size <= 0.0):
            raise ValidationError(f"box size components must be > 0, got {size}")
        object.__setattr__(self, "center", _freeze(center))
        object.__setattr__(self, "size", _freeze(size))
        object.__setattr__(self, "class_id", int(self.class_id))

    @property
    def min_corner(self) -> np.ndarray:
        return self.center - 0.5 * self.size

    @property
    def max_corner(self) -> np.ndarray:
        return self.center + 0.5 * self.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def corners(self) -> np.ndarray:
        """The 8 corners, ordered by (x, y, z) sign bits."""
        lo, hi = self.min_corner, self.max_corner
        out = np.empty((8, 3))
        for i in range(8):
            out[i] = [hi[0] if i & 4 else lo[0],
                      hi[1] if i & 2 else lo[1],
                      hi[2] if i & 1 else lo[2]]
        return out

    def contains(self, points: np.ndarray, tol: float = POINT_IN_BOX_TOL) -> np.ndarray:
        """Boolean mask: which points lie inside the box expanded by tol."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        lo = self.min_corner - tol
        hi = self.max_corner + tol
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box3D):
            return NotImplemented
        return (
            np.array_equal(self.center, other.center)
            and np.array_equal(self.size, other.size)
            and self.class_id == other.class_id
        )


@dataclass(frozen=True)
class SceneAnnotation:
    """Ground-truth boxes plus a per-point instance id (-1 = background)."""

    boxes: tuple[Box3D, ...]
    instance_ids: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        ids = np.asarray(self.instance_ids, dtype=np.int64).reshape(-1)
        if len(ids) and ids.max(initial=-1) >= len(self.boxes):
            bad = int(np.flatnonzero(ids >= len(self.boxes))[0])
            raise ValidationError(
                f"point {bad} references box {int(ids[bad])} of a "
                f"{len(self.boxes)}-box list"
            )
        if len(ids) and ids.min(initial=0) < -1:
            bad = int(np.flatnonzero(ids < -1)[0])
            raise ValidationError(f"point {bad} has instance id {int(ids[bad])} < -1")
        object.__setattr__(self, "instance_ids", _freeze(ids))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneAnnotation):
            return NotImplemented
        return self.boxes == other.boxes and np.array_equal(
            self.instance_ids, other.instance_ids
        )

    def foreground_mask(self) -> np.ndarray:
        return self.instance_ids >= 0

    def validate_against(self, cloud: PointCloud, tol: float = POINT_IN_BOX_TOL) -> None:
        """Check membership: every annotated point lies in (or within tol of)
        its box.  Raises ValidationError naming the first offending point."""
        if len(self.instance_ids) != len(cloud):
            raise ValidationError(
                f"annotation has {len(self.instance_ids)} instance ids for "
                f"{len(cloud)} points"
            )
        for b, box in enumerate(self.boxes):
            member = self.instance_ids == b
            if not member.any():
                continue
            inside = box.contains(cloud.positions[member], tol)
            if not inside.all():
                bad = int(np.flatnonzero(member)[np.flatnonzero(~inside)[0]])
                raise ValidationError(
                    f"point {bad} has instance id {b} but lies outside its box"
                )


@dataclass(frozen=True)
class Detection:
    """One detected box with a confidence score in [0, 1]."""

    box: Box3D
    score: float
    class_id: int

    def __post_init__(self):
        s = float(self.score)
        if not (0.0 <= s <= 1.0) or not np.isfinite(s):
            raise ValidationError(f"detection score must be in [0, 1], got {s}")
        object.__setattr__(self, "score", s)
        object.__setattr__(self, "class_id", int(self.class_id))


# ---------------------------------------------------------------------------
# Scene files
# ---------------------------------------------------------------------------


def _scene_paths(path) -> tuple[Path, Path]:
    p = Path(path)
    stem = p.with_suffix("") if p.suffix in (".pts", ".ann") else p
    return stem.with_suffix(".pts"), stem.with_suffix(".ann")


def save_scene(cloud: PointCloud, annotation: SceneAnnotation, path) -> None:
    """Write ``<stem>.pts`` and ``<stem>.ann``; path may carry either suffix."""
    annotation.validate_against(cloud)
    pts_path, ann_path = _scene_paths(path)
    feat = cloud.features
    try:
        with open(pts_path, "w") as f:
            for i in range(len(cloud)):
                fields = [_fmt(v) for v in cloud.positions[i]]
                if feat is not None:
                    fields += [_fmt(v) for v in feat[i]]
                f.write(" ".join(fields) + "\n")
        record = {
            "boxes": [
                {
                    "center": [float(v) for v in b.center],
                    "size": [float(v) for v in b.size],
                    "class_id": b.class_id,
                }
                for b in annotation.boxes
            ],
            "instance_ids": [int(v) for v in annotation.instance_ids],
            "feature_dim": cloud.feature_dim,
        }
        with open(ann_path, "w") as f:
            json.dump(record, f, indent=1)
            f.write("\n")
    except OSError as e:
        raise IoError(f"cannot write scene {pts_path.stem!r}: {e}") from e


def load_scene(path) -> tuple[PointCloud, SceneAnnotation]:
    """Load and validate a scene; see module docstring for the format."""
    pts_path, ann_path = _scene_paths(path)
    try:
        ann_text = ann_path.read_text()
        pts_text = pts_path.read_text()
    except OSError as e:
        raise IoError(f"cannot read scene {pts_path.stem!r}: {e}") from e

    try:
        record = json.loads(ann_text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{ann_path}: invalid JSON: {e}") from e
    for key in ("boxes", "instance_ids", "feature_dim"):
        if key not in record:
            raise ParseError(f"{ann_path}: missing key {key!r}")
    feature_dim = int(record["feature_dim"])

    positions, features = [], []
    for lineno, line in enumerate(pts_text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3 + feature_dim:
            raise ParseError(
                f"{pts_path}:{lineno}: expected {3 + feature_dim} fields, "
                f"got {len(fields)}"
            )
        try:
            values = [float(v) for v in fields]
        except ValueError as e:
            raise ParseError(f"{pts_path}:{lineno}: {e}") from e
        positions.append(values[:3])
        features.append(values[3:])

    cloud = PointCloud(
        np.asarray(positions, dtype=np.float64).reshape(len(positions), 3),
        np.asarray(features, dtype=np.float64).reshape(len(positions), feature_dim)
        if feature_dim
        else None,
    )

    boxes = []
    for k, rec in enumerate(record["boxes"]):
        try:
            boxes.append(Box3D(rec["center"], rec["size"], rec["class_id"]))
        except (KeyError, TypeError) as e:
            raise ParseError(f"{ann_path}: box {k}: {e}") from e
    annotation = SceneAnnotation(tuple(boxes), np.asarray(record["instance_ids"]))
    annotation.validate_against(cloud)
    return cloud, annotation


# ---------------------------------------------------------------------------
# PLY export
# ---------------------------------------------------------------------------


def export_ply(points: np.ndarray, colors: np.ndarray, path) -> None:
    """ASCII PLY 1.0 with ``x y z red green blue`` vertices."""
    pts = _as_points(points, "points")
    cols = np.asarray(colors)
    if cols.size == 0:
        cols = cols.reshape(0, 3)
    if cols.shape != (len(pts), 3):
        raise ValidationError(
            f"colors must have shape ({len(pts)}, 3), got {cols.shape}"
        )
    cols = np.clip(np.rint(cols).astype(np.int64), 0, 255)
    header = (
        "ply\nformat ascii 1.0\n"
        f"element vertex {len(pts)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    try:
        with open(path, "w") as f:
            f.write(header)
            for p, c in zip(pts, cols):
                f.write(
                    f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])} "
                    f"{int(c[0])} {int(c[1])} {int(c[2])}\n"
                )
    except OSError as e:
        raise IoError(f"cannot write PLY {path!r}: {e}") from e


# ---------------------------------------------------------------------------
# Detection / ground-truth exchange files (JSON)
# ---------------------------------------------------------------------------


def save_detections(detections: Sequence[Detection], path) -> None:
    records = [
        {
            "center": [float(v) for v in d.box.center],
            "size": [float(v) for v in d.box.size],
            "class_id": d.class_id,
            "score": d.score,
        }
        for d in detections
    ]
    try:
        with open(path, "w") as f:
            json.dump(records, f, indent=1)
            f.write("\n")
    except OSError as e:
        raise IoError(f"cannot write detections {path!r}: {e}") from e


def load_detections(path) -> list[Detection]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise IoError(f"cannot read detections {path!r}: {e}") from e
    try:
        records = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}") from e
    out = []
    for k, rec in enumerate(records):
        try:
            box = Box3D(rec["center"], rec["size"], rec["class_id"])
            out.append(Detection(box, rec["score"], rec["class_id"]))
        except (KeyError, TypeError) as e:
            raise ParseError(f"{path}: detection {k}: {e}") from e
    return out


def save_boxes(boxes: Sequence[Box3D], path) -> None:
    records = [
        {
            "center": [float(v) for v in b.center],
            "size": [float(v) for v in b.size],
            "class_id": b.class_id,
        }
        for b in boxes
    ]
    try:
        with open(path, "w") as f:
            json.dump(records, f, indent=1)
            f.write("\n")
    except OSError as e:
        raise IoError(f"cannot write boxes {path!r}: {e}") from e


def load_boxes(path) -> list[Box3D]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise IoError(f"cannot read boxes {path!r}: {e}") from e
    try:
        records = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}") from e
    out = []
    for k, rec in enumerate(records):
        try:
            out.append(Box3D(rec["center"], rec["size"], rec["class_id"]))
        except (KeyError, TypeError) as e:
            raise ParseError(f"{path}: box {k}: {e}") from e
    return out
