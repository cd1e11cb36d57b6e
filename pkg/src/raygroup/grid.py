"""Uniform-grid spatial index: exact ball queries and feature propagation.

Points are binned into cubic cells of side ``cell_size`` (cell coordinate =
componentwise floor(position / cell_size)).  Queries visit only the cells
that can intersect the query ball, so results are exact: identical to a
linear scan, ordered by ascending distance with ties broken by lowest
point index.  The index is immutable after construction.

The batch path works on linearized cell keys.  A probe key is computed as
base key + constant offset, which is exact for any cell inside the
occupied bounding box; probes that fall outside either miss the key table
or alias an unrelated cell, and aliased candidates are eliminated by the
final distance test, so no per-axis bounds masking is needed.  Compact
grids additionally get a dense key -> (start, count) table that replaces
the binary search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .scene import PointCloud, _freeze

__all__ = [
    "GridIndex",
    "build_grid",
    "ball_query",
    "ball_query_batch",
    "interpolate_features",
]

#: Dense lookup tables are built when the occupied bounding box has at most
#: this many cells (or 8x the point count, whichever is larger).
_DENSE_CELL_CAP = 1 << 16

#: Upper bound on (queries x probes) handled per chunk; keeps temporaries
#: small enough for the allocator to recycle their pages.
_CHUNK_SLOTS = 1 << 21


def _positions_of(points) -> np.ndarray:
    if isinstance(points, PointCloud):
        return points.positions
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidParameter(f"points must have shape (n, 3), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class GridIndex:
    """Immutable cell -> point-index mapping over one point cloud.

    ``cells`` is the mapping view; the CSR-style arrays behind it
    (sorted unique linear cell keys plus offsets into a permutation of
    the point indices) are what queries actually run on.
    """

    cell_size: float
    positions: np.ndarray  # (n, 3), the indexed cloud's positions
    cell_min: np.ndarray  # (3,) int64, lowest occupied cell coordinate
    dims: np.ndarray  # (3,) int64, occupied extent in cells
    cell_keys: np.ndarray  # (n_cells,) int64, sorted unique linear keys
    cell_starts: np.ndarray  # (n_cells + 1,) int64 offsets into point_order
    point_order: np.ndarray  # (n,) int64, point indices grouped by cell
    dense_start: np.ndarray | None  # (prod(dims),) int64, or None if too big
    dense_count: np.ndarray | None

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def cells(self) -> dict[tuple[int, int, int], np.ndarray]:
        """Cell coordinate -> sorted point indices (built on demand)."""
        out = {}
        nz = int(self.dims[2]) if len(self.cell_keys) else 1
        nyz = int(self.dims[1] * self.dims[2]) if len(self.cell_keys) else 1
        for c in range(len(self.cell_keys)):
            key = int(self.cell_keys[c])
            cx, rem = divmod(key, nyz)
            cy, cz = divmod(rem, nz)
            coord = (
                cx + int(self.cell_min[0]),
                cy + int(self.cell_min[1]),
                cz + int(self.cell_min[2]),
            )
            members = self.point_order[self.cell_starts[c] : self.cell_starts[c + 1]]
            out[coord] = np.sort(members)
        return out

    def cell_of(self, position) -> tuple[int, int, int]:
        c = np.floor(np.asarray(position, dtype=np.float64) / self.cell_size)
        return tuple(int(v) for v in c)


def build_grid(points, cell_size: float) -> GridIndex:
    """Index a cloud; every point lands in exactly one cell."""
    if not (cell_size > 0.0) or not math.isfinite(cell_size):
        raise InvalidParameter(f"cell_size must be > 0, got {cell_size}")
    positions = _positions_of(points)
    if positions.flags.writeable:  # detach from caller-mutable buffers
        positions = _freeze(positions)
    n = len(positions)
    if n == 0:
        zero3 = np.zeros(3, dtype=np.int64)
        return GridIndex(
            cell_size=float(cell_size),
            positions=positions,
            cell_min=zero3,
            dims=zero3,
            cell_keys=np.empty(0, dtype=np.int64),
            cell_starts=np.zeros(1, dtype=np.int64),
            point_order=np.empty(0, dtype=np.int64),
            dense_start=None,
            dense_count=None,
        )
    coords = np.floor(positions / cell_size).astype(np.int64)
    cell_min = coords.min(axis=0)
    dims = coords.max(axis=0) - cell_min + 1
    rel = coords - cell_min
    keys = (rel[:, 0] * dims[1] + rel[:, 1]) * dims[2] + rel[:, 2]
    order = np.argsort(keys, kind="stable").astype(np.int64)
    sorted_keys = keys[order]
    uniq_keys, first = np.unique(sorted_keys, return_index=True)
    starts = np.concatenate([first, [n]]).astype(np.int64)

    dense_start = dense_count = None
    n_cells_total = int(dims[0] * dims[1] * dims[2])
    if n_cells_total <= max(_DENSE_CELL_CAP, 8 * n):
        dense_start = np.zeros(n_cells_total, dtype=np.int64)
        dense_count = np.zeros(n_cells_total, dtype=np.int64)
        dense_start[uniq_keys] = starts[:-1]
        dense_count[uniq_keys] = starts[1:] - starts[:-1]

    return GridIndex(
        cell_size=float(cell_size),
        positions=positions,
        cell_min=cell_min,
        dims=dims,
        cell_keys=uniq_keys.astype(np.int64),
        cell_starts=starts,
        point_order=order,
        dense_start=dense_start,
        dense_count=dense_count,
    )


def _probe_offsets(index: GridIndex, radius: float) -> tuple[np.ndarray, int, float]:
    """Per-axis probe block and deduplicated key-offset constants.

    Returns (key offsets, span, base shift) where a query's probe block
    starts at floor((center - base_shift) / cell_size) and covers
    span cells per axis.  Two block layouts are possible: centered on the
    query's own cell, or anchored at the ball's low corner; whichever
    probes fewer cells wins.
    """
    s = index.cell_size
    reach = int(math.ceil(radius / s))
    span_center = 2 * reach + 1
    span_lo = 2 if 2.0 * radius <= s else int(math.floor(2.0 * radius / s)) + 2
    if span_lo < span_center:
        span, shift = span_lo, radius
    else:
        span, shift = span_center, float(reach) * s
    r = np.arange(span, dtype=np.int64)
    offs = (
        (r[:, None, None] * index.dims[1] + r[None, :, None]) * index.dims[2]
        + r[None, None, :]
    ).ravel()
    # Degenerate grids (an axis of 1-2 cells) make distinct (dx, dy, dz)
    # collide on the same key; keep one probe per key.
    return np.unique(offs), span, shift


def ball_query(index: GridIndex, center, radius: float, max_k: int) -> np.ndarray:
    """Up to ``max_k`` point indices within ``radius`` of ``center``,
    ordered by ascending distance (ties by lowest index)."""
    center = np.asarray(center, dtype=np.float64).reshape(3)
    padded, counts = ball_query_batch(index, center[None, :], radius, max_k)
    return padded[0, : counts[0]].copy()


def ball_query_batch(
    index: GridIndex, centers, radius: float, max_k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ball query for many centers at once.

    Returns ``(indices, counts)`` where ``indices`` is (Q, max_k) int64
    padded with -1 and ``counts[q]`` is the number of valid entries in
    row q.  Row contents and order match a brute-force scan exactly.
    """
    if not (radius > 0.0):
        raise InvalidParameter(f"radius must be > 0, got {radius}")
    if max_k < 1:
        raise InvalidParameter(f"max_k must be >= 1, got {max_k}")
    centers = np.asarray(centers, dtype=np.float64)
    if centers.size == 0:
        centers = centers.reshape(0, 3)
    if centers.ndim != 2 or centers.shape[1] != 3:
        raise InvalidParameter(f"centers must have shape (q, 3), got {centers.shape}")
    Q = len(centers)
    max_k = min(max_k, max(len(index), 1))  # a query can never exceed n hits
    out = np.full((Q, max_k), -1, dtype=np.int64)
    counts = np.zeros(Q, dtype=np.int64)
    if Q == 0 or len(index) == 0:
        return out, counts

    offs, span, shift = _probe_offsets(index, radius)
    base = np.floor((centers - shift) / index.cell_size).astype(np.int64)
    rel = base - index.cell_min
    base_key = (rel[:, 0] * index.dims[1] + rel[:, 1]) * index.dims[2] + rel[:, 2]

    tables = None
    if index.dense_start is not None:
        # Guard-padded copies of the dense tables let probes skip bounds
        # masking: every key from a block that intersects the occupied box
        # lands inside the padded range, and queries whose block cannot
        # intersect it are pointed at the zeroed low guard.
        ny, nz = int(index.dims[1]), int(index.dims[2])
        guard = (span - 1) * (ny * nz + nz + 1)
        size = len(index.dense_start)
        lo_pad = guard + 1
        total = lo_pad + size + guard
        if total <= 4 * size + 8192:
            starts_p = np.zeros(total, dtype=np.int64)
            counts_p = np.zeros(total, dtype=np.int64)
            starts_p[lo_pad : lo_pad + size] = index.dense_start
            counts_p[lo_pad : lo_pad + size] = index.dense_count
            block_hits = np.all((rel > -span) & (rel < index.dims), axis=1)
            base_key = np.where(block_hits, base_key + lo_pad, 0)
            tables = (starts_p, counts_p)

    chunk = max(1024, _CHUNK_SLOTS // len(offs))
    for lo in range(0, Q, chunk):
        hi = min(lo + chunk, Q)
        _query_chunk(
            index, centers[lo:hi], base_key[lo:hi], offs, radius, max_k,
            out[lo:hi], counts[lo:hi], tables,
        )
    return out, counts


def _query_chunk(index, centers, base_key, offs, radius, max_k, out, counts, tables):
    q = len(centers)
    n_offs = len(offs)
    keys = base_key[:, None] + offs[None, :]  # (q, O)
    if tables is not None:
        starts_p, counts_p = tables
        starts = starts_p[keys].ravel()
        sizes = counts_p[keys].ravel()
    elif index.dense_start is not None:
        # Negative keys become huge as uint64, so one compare bounds both ends.
        valid = keys.view(np.uint64) < np.uint64(len(index.dense_start))
        safe = np.where(valid, keys, 0)
        starts = index.dense_start[safe].ravel()
        sizes = np.where(valid, index.dense_count[safe], 0).ravel()
    else:
        pos = np.searchsorted(index.cell_keys, keys)
        pos_c = np.minimum(pos, len(index.cell_keys) - 1)
        found = index.cell_keys[pos_c] == keys
        cell_sizes = index.cell_starts[1:] - index.cell_starts[:-1]
        starts = np.where(found, index.cell_starts[:-1][pos_c], 0).ravel()
        sizes = np.where(found, cell_sizes[pos_c], 0).ravel()

    # Drop empty probe slots before the (much costlier) expansion step.
    hit = np.flatnonzero(sizes)
    if len(hit) == 0:
        return
    starts, sizes = starts[hit], sizes[hit]
    slot_q = hit // n_offs
    total = int(sizes.sum())
    qid = np.repeat(slot_q, sizes)
    slot_start = np.cumsum(sizes) - sizes
    within = np.arange(total, dtype=np.int64) - np.repeat(slot_start, sizes)
    cand = index.point_order[np.repeat(starts, sizes) + within]

    diff = index.positions[cand] - centers[qid]
    d2 = (diff * diff).sum(axis=1)
    keep = d2 <= radius * radius
    cand, qid, d2 = cand[keep], qid[keep], d2[keep]
    if len(cand) == 0:
        return

    order = np.lexsort((cand, d2, qid))
    cand, qid = cand[order], qid[order]
    per_hit = np.bincount(qid, minlength=q)
    group_start = np.concatenate([[0], np.cumsum(per_hit)[:-1]])
    rank = np.arange(len(cand), dtype=np.int64) - np.repeat(group_start, per_hit)
    take = rank < max_k
    out[qid[take], rank[take]] = cand[take]
    counts[:] = np.minimum(per_hit, max_k)


_ZERO_DISTANCE = 1e-10
_CHUNK_ELEMS = 1 << 21


def interpolate_features(src: PointCloud, dst_positions, k: int) -> np.ndarray:
    """Inverse-distance-weighted k-nearest-neighbor feature propagation.

    Weight of neighbor j is (1/d_j) / sum(1/d_i); a source closer than
    1e-10 m is copied exactly.  Returns (m, C) float64.
    """
    if src.features is None:
        raise InvalidParameter("source cloud has no features")
    if k < 1 or k > len(src):
        raise InvalidParameter(f"k must be in [1, {len(src)}], got {k}")
    dst = np.asarray(dst_positions, dtype=np.float64)
    if dst.size == 0:
        dst = dst.reshape(0, 3)
    if dst.ndim != 2 or dst.shape[1] != 3:
        raise InvalidParameter(f"dst_positions must be (m, 3), got {dst.shape}")

    feats = src.features
    out = np.empty((len(dst), feats.shape[1]), dtype=np.float64)
    chunk = max(1, _CHUNK_ELEMS // max(1, len(src)))
    for lo in range(0, len(dst), chunk):
        hi = min(lo + chunk, len(dst))
        diff = dst[lo:hi, None, :] - src.positions[None, :, :]
        d2 = (diff * diff).sum(axis=2)
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        rows = np.arange(hi - lo)[:, None]
        d = np.sqrt(d2[rows, nn])
        exact = d[:, 0] < _ZERO_DISTANCE
        w = np.zeros_like(d)
        inexact = ~exact
        if inexact.any():
            inv = 1.0 / d[inexact]
            w[inexact] = inv / inv.sum(axis=1, keepdims=True)
        out[lo:hi] = np.einsum("mk,mkc->mc", w, feats[nn])
        if exact.any():
            out[lo:hi][exact] = feats[nn[exact, 0]]
    return out
