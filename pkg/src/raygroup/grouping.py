"""Vote clustering, anchor labeling, and ordered ray-feature assembly.

Candidate centers are picked by FPS either on vote coordinates directly or
on seed coordinates (returning the votes of the sampled seeds).  A cluster
is positive when a ground-truth box center lies within the positive radius
of its center; positive clusters inherit the half-diagonal scale of their
nearest box.

Anchor mask labels are a pure existence test: an anchor is positive iff
at least one surface point of the assigned object lies inside its ball
region, with no neighbor-count truncation.  Masked anchor features are
flattened in the fixed (ray, anchor, channel) order that downstream
projections rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParameter, ShapeMismatch
from .grid import _positions_of, ball_query_batch, build_grid
from .rays import scale_target
from .sampling import AnchorSet, fps_indices
from .scene import PointCloud, SceneAnnotation, _freeze

__all__ = [
    "VoteCluster",
    "RayFeatureBlock",
    "sample_candidates",
    "group_votes",
    "assign_positive_clusters",
    "anchor_mask_labels",
    "mask_labels_for_positions",
    "pool_anchor_features",
    "mask_features",
    "ordered_concat",
    "toy_featurizer",
    "TOY_FEATURE_DIM",
]

#: Default vote grouping radius (m).
VOTE_RADIUS = 0.3

#: Radius (m) within which a cluster center counts as on a GT object center.
POSITIVE_RADIUS = 0.3


@dataclass(frozen=True, eq=False)
class VoteCluster:
    """A candidate object: a vote center plus the votes grouped around it."""

    center: np.ndarray  # (3,)
    member_seed_indices: np.ndarray  # sorted int64 indices into the vote list
    feature: np.ndarray | None = None
    positive: bool | None = None
    scale: float | None = None
    assigned_box: int | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "center", _freeze(np.asarray(self.center, dtype=np.float64).reshape(3))
        )
        members = np.asarray(self.member_seed_indices, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "member_seed_indices", _freeze(np.sort(members)))
        if self.feature is not None:
            object.__setattr__(
                self, "feature", _freeze(np.asarray(self.feature, dtype=np.float64).reshape(-1))
            )


@dataclass(frozen=True, eq=False)
class RayFeatureBlock:
    """Masked anchor features in canonical layout (N rays, K anchors, C_a).

    Entries at negative-mask positions are exactly zero.
    """

    features: np.ndarray  # (N, K, C_a)
    labels: np.ndarray  # (N, K) binary
    stage: str

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        l = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 3 or l.shape != f.shape[:2]:
            raise ShapeMismatch(
                f"features (N, K, C) and labels (N, K) required, got {f.shape} / {l.shape}"
            )
        if not np.all((l == 0) | (l == 1)):
            raise ShapeMismatch("labels must be binary")
        if np.any(f[l == 0] != 0.0):
            raise ShapeMismatch("negative-mask entries must be exactly zero")
        object.__setattr__(self, "features", _freeze(f))
        object.__setattr__(self, "labels", _freeze(l))

    @property
    def layout(self) -> tuple[int, int, int]:
        return self.features.shape


def sample_candidates(
    votes, seeds, M: int, mode: str = "vote_fps"
) -> tuple[np.ndarray, np.ndarray]:
    """Pick M cluster candidates; returns (centers (M, 3), vote indices).

    ``vote_fps`` runs FPS on the vote coordinates; ``seed_fps`` runs FPS on
    the seed coordinates and returns the votes of the sampled seeds.
    """
    vote_pos = _positions_of(votes)
    seed_pos = _positions_of(seeds)
    if len(vote_pos) != len(seed_pos):
        raise InvalidParameter("votes and seeds must be index-aligned")
    if not (1 <= M <= len(vote_pos)):
        raise InvalidParameter(f"M must be in [1, {len(vote_pos)}], got {M}")
    if mode == "vote_fps":
        idx = fps_indices(vote_pos, M)
    elif mode == "seed_fps":
        idx = fps_indices(seed_pos, M)
    else:
        raise InvalidParameter(f"unknown candidate mode {mode!r}")
    return vote_pos[idx].copy(), idx


def group_votes(candidates, votes, radius: float = VOTE_RADIUS) -> list[VoteCluster]:
    """One cluster per candidate, holding every vote within ``radius``.

    Membership is unbounded (a vote may join several clusters); members are
    stored sorted by vote index.
    """
    if not (radius > 0.0):
        raise InvalidParameter(f"radius must be > 0, got {radius}")
    centers = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    vote_pos = _positions_of(votes)
    if len(vote_pos) == 0:
        return [VoteCluster(c, np.empty(0, dtype=np.int64)) for c in centers]
    index = build_grid(vote_pos, radius)
    padded, counts = ball_query_batch(index, centers, radius, max_k=len(vote_pos))
    return [
        VoteCluster(centers[i], padded[i, : counts[i]]) for i in range(len(centers))
    ]


def assign_positive_clusters(
    clusters, gt_boxes, positive_radius: float = POSITIVE_RADIUS
) -> list[VoteCluster]:
    """Flag clusters whose center sits within ``positive_radius`` of a GT
    center and give them the nearest box's half-diagonal scale target.

    Ties between equally near boxes go to the lowest box index.
    """
    boxes = list(gt_boxes)
    if not boxes:
        return [
            replace(c, positive=False, scale=None, assigned_box=None) for c in clusters
        ]
    gt_centers = np.array([b.center for b in boxes])
    out = []
    for c in clusters:
        diff = gt_centers - c.center[None, :]
        d2 = (diff * diff).sum(axis=1)
        nearest = int(np.argmin(d2))
        if d2[nearest] <= positive_radius * positive_radius:
            out.append(
                replace(
                    c,
                    positive=True,
                    scale=scale_target(boxes[nearest]),
                    assigned_box=nearest,
                )
            )
        else:
            out.append(replace(c, positive=False, scale=None, assigned_box=None))
    return out


def mask_labels_for_positions(
    anchor_positions,
    cloud_positions,
    instance_ids,
    radius: float,
    assigned_box: int,
) -> np.ndarray:
    """Existence-test labels for raw anchor positions; returns (A,) int64."""
    if not (radius > 0.0):
        raise InvalidParameter(f"radius must be > 0, got {radius}")
    anchors = np.atleast_2d(np.asarray(anchor_positions, dtype=np.float64))
    labels = np.zeros(len(anchors), dtype=np.int64)
    if assigned_box < 0:
        return labels
    ids = np.asarray(instance_ids, dtype=np.int64).reshape(-1)
    subset = _positions_of(cloud_positions)[ids == assigned_box]
    if len(subset) == 0:
        return labels
    index = build_grid(subset, radius)
    _, counts = ball_query_batch(index, anchors, radius, max_k=1)
    labels[counts > 0] = 1
    return labels


def anchor_mask_labels(
    anchors: AnchorSet,
    annotation: SceneAnnotation,
    cloud: PointCloud,
    radius: float,
    assigned_box: int,
) -> np.ndarray:
    """Binary (N, K) labels: 1 iff the anchor's ball region contains a
    surface point of the assigned object.  ``assigned_box == -1`` labels
    everything negative."""
    flat = mask_labels_for_positions(
        anchors.flat_positions(), cloud.positions, annotation.instance_ids,
        radius, assigned_box,
    )
    return flat.reshape(anchors.N, anchors.K)


def pool_anchor_features(
    anchors: AnchorSet, seeds: PointCloud, radius: float, max_k: int
) -> np.ndarray:
    """Mean-pool seed features inside each anchor's ball region.

    Deterministic stand-in for a learned local aggregation: the query
    returns the max_k nearest in-radius seeds and their features are
    averaged; anchors with an empty region get a zero vector.
    Returns (N, K, C).
    """
    if seeds.features is None:
        raise InvalidParameter("seed cloud has no features")
    C = seeds.feature_dim
    flat = anchors.flat_positions()
    out = np.zeros((len(flat), C), dtype=np.float64)
    if len(seeds) and len(flat):
        index = build_grid(seeds.positions, radius)
        padded, counts = ball_query_batch(index, flat, radius, max_k)
        has = counts > 0
        if has.any():
            gathered = seeds.features[np.where(padded < 0, 0, padded)]
            valid = (padded >= 0)[:, :, None]
            sums = (gathered * valid).sum(axis=1)
            out[has] = sums[has] / counts[has, None]
    return out.reshape(anchors.N, anchors.K, C)


def mask_features(features, labels, stage: str = "coarse") -> RayFeatureBlock:
    """Zero the feature vectors of negative anchors, keeping positives."""
    f = np.asarray(features, dtype=np.float64)
    l = np.asarray(labels, dtype=np.int64)
    if f.ndim != 3 or l.shape != f.shape[:2]:
        raise ShapeMismatch(
            f"features (N, K, C) and labels (N, K) required, got {f.shape} / {l.shape}"
        )
    masked = np.where((l == 1)[:, :, None], f, 0.0)
    return RayFeatureBlock(features=masked, labels=l, stage=stage)


def ordered_concat(block: RayFeatureBlock) -> np.ndarray:
    """Flatten a block to 1-D in (ray, anchor, channel) order.

    Entry ((ray * K) + k) * C_a + c is feature channel c of anchor k on
    the given ray.
    """
    return block.features.reshape(-1).copy()


#: Output dimensionality of the toy positional featurizer.
TOY_FEATURE_DIM = 32

_TOY_FREQS = 2.0 ** np.arange(5)  # 1, 2, 4, 8, 16


def toy_featurizer(cloud: PointCloud) -> PointCloud:
    """Deterministic sinusoidal positional features, C = 32 per point.

    Channels are sin/cos of each coordinate at five octave frequencies
    (30 channels) plus sin/cos of the coordinate sum.  Position-only, so
    identical points get identical features and translation changes them.
    """
    pos = cloud.positions
    phases = pos[:, None, :] * _TOY_FREQS[None, :, None]  # (n, 5, 3)
    per_axis = np.stack([np.sin(phases), np.cos(phases)], axis=-1)  # (n, 5, 3, 2)
    s = pos.sum(axis=1)
    feats = np.concatenate(
        [per_axis.reshape(len(pos), 30), np.sin(s)[:, None], np.cos(s)[:, None]],
        axis=1,
    )
    return cloud.with_features(feats)
