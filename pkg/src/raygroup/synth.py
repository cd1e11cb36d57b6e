"""Synthetic box-room scenes and the brute-force oracles tests run against.

Scenes are rooms with axis-aligned boxes whose surfaces are sampled
uniformly by area, plus background points on the floor and walls.  All
randomness comes from a SplitMix64 stream seeded by the scene spec, so a
spec reproduces its scene bit-exactly on any platform; generated fixtures
are additionally committed as files.

The oracles deliberately recompute everything from scratch (linear scans,
full distance matrices, Monte Carlo volumes) so they stay independent of
the accelerated implementations they check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GenerationFailure, InvalidParameter
from .rng import SplitMix64
from .scene import Box3D, PointCloud, SceneAnnotation

__all__ = [
    "SceneSpec",
    "generate_scene",
    "oracle_votes",
    "oracle_fps",
    "oracle_ball_query",
    "oracle_iou_mc",
]

_MAX_PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of one synthetic scene.

    ``size_range`` is a per-axis ((min, max), (min, max), (min, max)) in
    meters; a single (min, max) pair is broadcast to all three axes.
    """

    room_extent: tuple[float, float, float] = (6.0, 6.0, 3.0)
    n_objects: int = 4
    size_range: tuple = ((0.4, 1.2), (0.4, 1.2), (0.4, 1.2))
    points_per_object: int = 256
    background_points: int = 512
    rng_seed: int = 0

    def __post_init__(self):
        extent = tuple(float(v) for v in self.room_extent)
        if len(extent) != 3 or any(v <= 0 for v in extent):
            raise InvalidParameter(f"room_extent must be 3 positive lengths, got {extent}")
        object.__setattr__(self, "room_extent", extent)
        sr = self.size_range
        if len(sr) == 2 and np.isscalar(sr[0]):
            sr = (tuple(sr),) * 3
        sr = tuple((float(lo), float(hi)) for lo, hi in sr)
        if len(sr) != 3 or any(not (0 < lo <= hi) for lo, hi in sr):
            raise InvalidParameter(f"size_range must be per-axis 0 < min <= max, got {sr}")
        object.__setattr__(self, "size_range", sr)
        for name in ("n_objects", "points_per_object", "background_points"):
            v = int(getattr(self, name))
            if v < 0:
                raise InvalidParameter(f"{name} must be >= 0, got {v}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "rng_seed", int(self.rng_seed))


def _boxes_overlap(a: Box3D, b: Box3D) -> bool:
    lo = np.maximum(a.min_corner, b.min_corner)
    hi = np.minimum(a.max_corner, b.max_corner)
    return bool(np.all(hi - lo > 0.0))


def _place_boxes(spec: SceneSpec, rng: SplitMix64) -> list[Box3D]:
    boxes: list[Box3D] = []
    attempts = 0
    extent = np.asarray(spec.room_extent)
    while len(boxes) < spec.n_objects:
        if attempts >= _MAX_PLACEMENT_ATTEMPTS:
            raise GenerationFailure(
                f"placed {len(boxes)} of {spec.n_objects} boxes in "
                f"{_MAX_PLACEMENT_ATTEMPTS} attempts"
            )
        attempts += 1
        size = np.array([rng.uniform1(lo, hi) for lo, hi in spec.size_range])
        if np.any(size >= extent):
            continue
        center = np.array(
            [rng.uniform1(size[i] / 2.0, extent[i] - size[i] / 2.0) for i in range(3)]
        )
        candidate = Box3D(center, size, class_id=0)
        if all(not _boxes_overlap(candidate, b) for b in boxes):
            boxes.append(candidate)
    return boxes


def _sample_box_surface(box: Box3D, n: int, rng: SplitMix64) -> np.ndarray:
    """n points uniform over the box surface, faces weighted by area."""
    s = box.size
    # Face order: -x, +x, -y, +y, -z, +z.
    areas = np.array([s[1] * s[2], s[1] * s[2], s[0] * s[2], s[0] * s[2],
                      s[0] * s[1], s[0] * s[1]])
    cdf = np.cumsum(areas / areas.sum())
    cdf[-1] = 1.0
    face = np.searchsorted(cdf, rng.uniform(0.0, 1.0, n), side="left")
    a = rng.uniform(-0.5, 0.5, n)
    b = rng.uniform(-0.5, 0.5, n)
    out = np.empty((n, 3))
    axis = face // 2  # fixed axis of the face
    sign = np.where(face % 2 == 0, -0.5, 0.5)
    others = np.array([[1, 2], [0, 2], [0, 1]])
    for i in range(n):
        ax = int(axis[i])
        o1, o2 = others[ax]
        out[i, ax] = sign[i] * s[ax]
        out[i, o1] = a[i] * s[o1]
        out[i, o2] = b[i] * s[o2]
    return out + box.center[None, :]


def _sample_background(spec: SceneSpec, n: int, rng: SplitMix64) -> np.ndarray:
    """n points on the floor and the four walls, weighted by area."""
    ex, ey, ez = spec.room_extent
    areas = np.array([ex * ey, ex * ez, ex * ez, ey * ez, ey * ez])
    cdf = np.cumsum(areas / areas.sum())
    cdf[-1] = 1.0
    rect = np.searchsorted(cdf, rng.uniform(0.0, 1.0, n), side="left")
    a = rng.uniform(0.0, 1.0, n)
    b = rng.uniform(0.0, 1.0, n)
    out = np.empty((n, 3))
    for i in range(n):
        if rect[i] == 0:  # floor
            out[i] = (a[i] * ex, b[i] * ey, 0.0)
        elif rect[i] == 1:  # wall y = 0
            out[i] = (a[i] * ex, 0.0, b[i] * ez)
        elif rect[i] == 2:  # wall y = ey
            out[i] = (a[i] * ex, ey, b[i] * ez)
        elif rect[i] == 3:  # wall x = 0
            out[i] = (0.0, a[i] * ey, b[i] * ez)
        else:  # wall x = ex
            out[i] = (ex, a[i] * ey, b[i] * ez)
    return out


def generate_scene(spec: SceneSpec) -> tuple[PointCloud, SceneAnnotation]:
    """Deterministically generate (cloud, annotation) from a spec."""
    rng = SplitMix64(spec.rng_seed)
    boxes = _place_boxes(spec, rng)
    chunks, ids = [], []
    for b, box in enumerate(boxes):
        pts = _sample_box_surface(box, spec.points_per_object, rng)
        chunks.append(pts)
        ids.append(np.full(len(pts), b, dtype=np.int64))
    bg = _sample_background(spec, spec.background_points, rng)
    chunks.append(bg)
    ids.append(np.full(len(bg), -1, dtype=np.int64))
    positions = (
        np.concatenate(chunks, axis=0) if chunks else np.empty((0, 3))
    )
    instance_ids = (
        np.concatenate(ids) if ids else np.empty(0, dtype=np.int64)
    )
    cloud = PointCloud(positions)
    annotation = SceneAnnotation(tuple(boxes), instance_ids)
    annotation.validate_against(cloud)
    return cloud, annotation


def oracle_votes(cloud: PointCloud, annotation: SceneAnnotation) -> PointCloud:
    """Ideal votes: object points vote to their box center, background
    points vote to themselves."""
    votes = cloud.positions.copy()
    for b, box in enumerate(annotation.boxes):
        votes[annotation.instance_ids == b] = box.center
    return PointCloud(votes)


def oracle_fps(points, m: int, seed_index: int = 0) -> np.ndarray:
    """Reference FPS: recomputes every point-to-selected distance each step."""
    pos = points.positions if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    n = len(pos)
    if not (1 <= m <= n):
        raise InvalidParameter(f"m must be in [1, {n}], got {m}")
    if not (0 <= seed_index < n):
        raise InvalidParameter(f"seed_index must be in [0, {n}), got {seed_index}")
    selected = [int(seed_index)]
    for _ in range(1, m):
        diff = pos[:, None, :] - pos[selected][None, :, :]
        dmin = (diff * diff).sum(axis=2).min(axis=1)
        dmin[selected] = -1.0
        selected.append(int(np.argmax(dmin)))
    return np.asarray(selected, dtype=np.int64)


def oracle_ball_query(points, center, radius: float) -> np.ndarray:
    """Reference radius filter: linear scan, distance-sorted, ties by index."""
    pos = points.positions if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    if pos.size == 0:
        return np.empty(0, dtype=np.int64)
    center = np.asarray(center, dtype=np.float64).reshape(3)
    diff = pos - center[None, :]
    d2 = (diff * diff).sum(axis=1)
    hits = np.flatnonzero(d2 <= radius * radius)
    return hits[np.argsort(d2[hits], kind="stable")].astype(np.int64)


def oracle_iou_mc(
    a: Box3D, b: Box3D, samples: int, rng_seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo IoU estimate with its delta-method standard error."""
    if samples < 100_000:
        raise InvalidParameter(f"samples must be >= 1e5, got {samples}")
    lo = np.minimum(a.min_corner, b.min_corner)
    hi = np.maximum(a.max_corner, b.max_corner)
    rng = SplitMix64(rng_seed)
    pts = np.stack(
        [rng.uniform(lo[i], hi[i], samples) for i in range(3)], axis=1
    )
    in_a = a.contains(pts, tol=0.0)
    in_b = b.contains(pts, tol=0.0)
    x = (in_a & in_b).astype(np.float64)  # intersection indicator
    y = (in_a | in_b).astype(np.float64)  # union indicator
    xbar, ybar = float(x.mean()), float(y.mean())
    if ybar == 0.0:
        return 0.0, 0.0
    est = xbar / ybar
    var_x = xbar * (1.0 - xbar)
    var_y = ybar * (1.0 - ybar)
    cov = xbar - xbar * ybar  # E[xy] = E[x] since x <= y
    var_est = (var_x + est * est * var_y - 2.0 * est * cov) / (ybar * ybar * samples)
    return est, float(np.sqrt(max(var_est, 0.0)))
