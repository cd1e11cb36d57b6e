"""Point subset selection and along-ray anchor generation.

Farthest point sampling (FPS) is greedy max-min selection with ties broken
by lowest index, so it is fully deterministic and reproducible against a
brute-force reference.  Foreground-biased sampling splits points into a
top-kappa foreground set and the remaining background set by score, runs
FPS on each, and concatenates the results.

Anchors live on rays: the coarse stage drops one anchor at the center of
each of K_c equal bins; the fine stage treats binary coarse masks as a
piecewise-constant density over those bins and places K_f anchors by
inverting its CDF at uniform steps k / K_f.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .grid import _positions_of
from .rays import RayBundle
from .scene import _freeze

__all__ = [
    "SampleSource",
    "ScoredSampleSet",
    "AnchorPoint",
    "AnchorSet",
    "farthest_point_sampling",
    "fps_indices",
    "foreground_split",
    "foreground_biased_sampling",
    "coarse_anchors",
    "fine_anchors",
    "inverse_transform_times",
    "harden_masks",
]


class SampleSource(enum.Enum):
    FPS = "fps"
    FBS_FOREGROUND = "fbs_foreground"
    FBS_BACKGROUND = "fbs_background"


@dataclass(frozen=True, eq=False)
class ScoredSampleSet:
    """Selected point indices with provenance and optional scores."""

    indices: np.ndarray  # (m,) int64, unique
    sources: tuple[SampleSource, ...]
    scores: np.ndarray | None = None  # (m,) float64 in [0, 1] when present

    def __post_init__(self):
        idx = _freeze(np.asarray(self.indices, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "sources", tuple(self.sources))
        if len(self.sources) != len(idx):
            raise InvalidParameter("sources and indices must be aligned")
        if len(np.unique(idx)) != len(idx):
            raise InvalidParameter("selected indices must be unique")
        if self.scores is not None:
            s = np.asarray(self.scores, dtype=np.float64).reshape(-1)
            if len(s) != len(idx):
                raise InvalidParameter("scores and indices must be aligned")
            if len(s) and (np.any(s < 0.0) or np.any(s > 1.0) or not np.all(np.isfinite(s))):
                raise InvalidParameter("foreground scores must be in [0, 1]")
            object.__setattr__(self, "scores", _freeze(s))

    def __len__(self) -> int:
        return len(self.indices)

    def count(self, source: SampleSource) -> int:
        return sum(1 for s in self.sources if s is source)


def fps_indices(positions, m: int, seed_index: int = 0) -> np.ndarray:
    """Greedy max-min FPS over raw positions; returns (m,) selection order.

    Selected points are excluded from later steps, so duplicated positions
    are still selected at most once each.
    """
    pos = _positions_of(positions)
    n = len(pos)
    if not (1 <= m <= n):
        raise InvalidParameter(f"m must be in [1, {n}], got {m}")
    if not (0 <= seed_index < n):
        raise InvalidParameter(f"seed_index must be in [0, {n}), got {seed_index}")
    xs = np.ascontiguousarray(pos[:, 0])
    ys = np.ascontiguousarray(pos[:, 1])
    zs = np.ascontiguousarray(pos[:, 2])
    selected = np.empty(m, dtype=np.int64)
    selected[0] = seed_index
    # Preallocated buffers; the arithmetic stays (dx^2 + dy^2) + dz^2 so the
    # cached minima are bit-identical to a full recomputation.
    bx, by, bz = np.empty(n), np.empty(n), np.empty(n)

    def accumulate(q: int, dest: np.ndarray) -> None:
        np.subtract(xs, xs[q], out=bx)
        np.multiply(bx, bx, out=bx)
        np.subtract(ys, ys[q], out=by)
        np.multiply(by, by, out=by)
        np.subtract(zs, zs[q], out=bz)
        np.multiply(bz, bz, out=bz)
        np.add(bx, by, out=bx)
        np.add(bx, bz, out=dest)

    d2 = np.empty(n)
    accumulate(seed_index, d2)
    d2[seed_index] = -1.0  # selected sentinel: never the argmax again
    for i in range(1, m):
        nxt = int(np.argmax(d2))
        selected[i] = nxt
        accumulate(nxt, bz)
        np.minimum(d2, bz, out=d2)
        d2[nxt] = -1.0
    return selected


def farthest_point_sampling(points, m: int, seed_index: int = 0) -> ScoredSampleSet:
    """FPS over a cloud; indices come back in greedy selection order."""
    idx = fps_indices(points, m, seed_index)
    return ScoredSampleSet(idx, (SampleSource.FPS,) * len(idx))


def foreground_split(scores, kappa: int) -> tuple[np.ndarray, np.ndarray]:
    """Partition indices into the top-kappa by score and the rest.

    Ties are broken by lowest index; both halves come back sorted ascending.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(s)):
        raise InvalidParameter("scores must be finite")
    if not (0 <= kappa <= len(s)):
        raise InvalidParameter(f"kappa must be in [0, {len(s)}], got {kappa}")
    order = np.argsort(-s, kind="stable")
    return np.sort(order[:kappa]), np.sort(order[kappa:])


def foreground_biased_sampling(
    points,
    scores,
    kappa: int,
    alpha: int,
    beta: int,
    seed_indices: tuple[int, int] = (0, 0),
) -> ScoredSampleSet:
    """FPS(alpha) on the top-kappa foreground set plus FPS(beta) on the rest.

    ``seed_indices`` are positions within the foreground / background
    subsets (default: first point of each).  The result holds exactly
    alpha + beta unique indices into the original cloud, foreground block
    first, each block in FPS selection order.
    """
    pos = _positions_of(points)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(s) != len(pos):
        raise InvalidParameter("scores must align with points")
    if alpha < 0 or beta < 0:
        raise InvalidParameter("alpha and beta must be >= 0")
    if alpha > kappa:
        raise InvalidParameter(f"alpha ({alpha}) must be <= kappa ({kappa})")
    if beta > len(pos) - kappa:
        raise InvalidParameter(
            f"beta ({beta}) must be <= n - kappa ({len(pos) - kappa})"
        )
    fg, bg = foreground_split(s, kappa)
    parts, sources = [], []
    if alpha:
        parts.append(fg[fps_indices(pos[fg], alpha, seed_indices[0])])
        sources += [SampleSource.FBS_FOREGROUND] * alpha
    if beta:
        parts.append(bg[fps_indices(pos[bg], beta, seed_indices[1])])
        sources += [SampleSource.FBS_BACKGROUND] * beta
    idx = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    return ScoredSampleSet(idx, tuple(sources), s[idx])


# ---------------------------------------------------------------------------
# Anchors
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AnchorPoint:
    """One sample position along one ray."""

    position: np.ndarray
    t: float  # fraction of the far bound
    ray_index: int
    stage: str
    mask: int | None = None
    local_feature: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class AnchorSet:
    """K anchors on each of a bundle's N rays, in canonical (ray, k) order.

    Positions are derived from t as origin + t * far_bound * direction,
    so the reconstruction invariant holds by construction.
    """

    bundle: RayBundle
    stage: str
    t: np.ndarray  # (N, K)
    positions: np.ndarray  # (N, K, 3)

    @classmethod
    def from_t(cls, bundle: RayBundle, stage: str, t: np.ndarray) -> "AnchorSet":
        t = np.asarray(t, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != bundle.N:
            raise InvalidParameter(
                f"t must have shape ({bundle.N}, K), got {t.shape}"
            )
        positions = (
            bundle.origin[None, None, :]
            + (t * bundle.scale)[:, :, None] * bundle.directions[:, None, :]
        )
        return cls(bundle=bundle, stage=stage, t=_freeze(t), positions=_freeze(positions))

    @property
    def N(self) -> int:
        return self.t.shape[0]

    @property
    def K(self) -> int:
        return self.t.shape[1]

    def flat_positions(self) -> np.ndarray:
        return self.positions.reshape(-1, 3)

    def point(self, ray: int, k: int, mask=None, local_feature=None) -> AnchorPoint:
        return AnchorPoint(
            position=self.positions[ray, k],
            t=float(self.t[ray, k]),
            ray_index=ray,
            stage=self.stage,
            mask=mask,
            local_feature=local_feature,
        )


def coarse_anchors(bundle: RayBundle, K_c: int) -> AnchorSet:
    """Stratified anchors at the centers of K_c equal bins on every ray."""
    if K_c < 1:
        raise InvalidParameter(f"K_c must be >= 1, got {K_c}")
    t_row = (np.arange(1, K_c + 1, dtype=np.float64) - 0.5) / K_c
    t = np.broadcast_to(t_row, (bundle.N, K_c)).copy()
    return AnchorSet.from_t(bundle, "coarse", t)


def harden_masks(masks) -> np.ndarray:
    """Threshold soft masks at 0.5 into the binary form fine sampling takes."""
    return (np.asarray(masks, dtype=np.float64) >= 0.5).astype(np.int64)


def inverse_transform_times(masks, K_f: int) -> np.ndarray:
    """Invert the per-ray mask CDF at uniform steps u_k = k / K_f.

    ``masks`` is (R, K_c) binary.  Each row is normalized into a
    piecewise-constant PDF over K_c equal bins of [0, 1]; rows with no
    positive bin fall back to uniform placement t_k = k / (K_f + 1).
    Every returned time for a row with mass lies inside a positive bin.
    """
    m = np.asarray(masks, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise InvalidParameter(f"masks must be (R, K_c), got shape {m.shape}")
    if not np.all((m == 0.0) | (m == 1.0)):
        raise InvalidParameter("masks must be binary (use harden_masks first)")
    if K_f < 1:
        raise InvalidParameter(f"K_f must be >= 1, got {K_f}")
    R, K_c = m.shape
    u = np.arange(1, K_f + 1, dtype=np.float64) / K_f
    out = np.empty((R, K_f), dtype=np.float64)

    total = m.sum(axis=1)
    empty = total == 0
    if empty.any():
        out[empty] = np.arange(1, K_f + 1, dtype=np.float64) / (K_f + 1)
    live = ~empty
    if live.any():
        cum = np.cumsum(m[live], axis=1)
        cdf = cum / cum[:, -1:]  # final edge exactly 1.0
        edges = np.concatenate([np.zeros((cdf.shape[0], 1)), cdf], axis=1)
        # First edge >= u is never the continuation of an equal-edge run,
        # so the chosen bin always has positive mass.
        j = (edges[:, None, :] >= u[None, :, None]).argmax(axis=2)  # (r, K_f)
        rows = np.arange(cdf.shape[0])[:, None]
        lo = edges[rows, j - 1]
        hi = edges[rows, j]
        out[live] = ((j - 1) + (u[None, :] - lo) / (hi - lo)) / K_c
    return out


def fine_anchors(coarse_masks, K_f: int, bundle: RayBundle) -> AnchorSet:
    """Resample K_f anchors per ray, concentrated in positive coarse bins."""
    m = np.asarray(coarse_masks)
    if m.ndim != 2 or m.shape[0] != bundle.N:
        raise InvalidParameter(
            f"coarse_masks must have shape ({bundle.N}, K_c), got {m.shape}"
        )
    t = inverse_transform_times(m, K_f)
    return AnchorSet.from_t(bundle, "fine", t)
