"""Performance smoke benchmark: FPS downsampling and batched ball queries.

Run as a script to print and save the measurements:

    python benchmarks/bench.py [--out results.json]

Budgets (informational, not enforced): FPS 50000 -> 2048 under 500 ms;
256 clusters x 66 rays x 8 anchor queries (135168 balls, radius 0.2,
max_k 8) over 2048 seeds under 200 ms, single-threaded.
"""

import argparse
import json
import time

import numpy as np

from raygroup.grid import ball_query_batch, build_grid
from raygroup.rng import SplitMix64
from raygroup.sampling import fps_indices

FPS_BUDGET_MS = 500.0
BALL_QUERY_BUDGET_MS = 200.0


def _room_points(rng: SplitMix64, n: int, extent=(10.0, 10.0, 3.0)) -> np.ndarray:
    return np.stack(
        [rng.uniform(0.0, extent[0], n), rng.uniform(0.0, extent[1], n),
         rng.uniform(0.0, extent[2], n)],
        axis=1,
    )


def bench_fps(repeats: int = 3) -> dict:
    rng = SplitMix64(101)
    points = _room_points(rng, 50_000)
    fps_indices(points[:2000], 256, 0)  # warm the buffers / code path
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        selected = fps_indices(points, 2048, 0)
        times.append((time.perf_counter() - t0) * 1000.0)
    assert len(np.unique(selected)) == 2048
    return {
        "n_points": 50_000,
        "n_selected": 2048,
        "best_ms": min(times),
        "times_ms": times,
        "budget_ms": FPS_BUDGET_MS,
    }


def bench_ball_queries(repeats: int = 3) -> dict:
    rng = SplitMix64(202)
    seeds = _room_points(rng, 2048, extent=(6.0, 6.0, 3.0))
    index = build_grid(seeds, cell_size=0.2)
    n_queries = 256 * 66 * 8
    centers = _room_points(rng, n_queries, extent=(6.0, 6.0, 3.0))
    ball_query_batch(index, centers[:2000], 0.2, 8)  # warm
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        padded, counts = ball_query_batch(index, centers, 0.2, 8)
        times.append((time.perf_counter() - t0) * 1000.0)
    return {
        "n_queries": n_queries,
        "n_seeds": 2048,
        "radius": 0.2,
        "max_k": 8,
        "total_hits": int(counts.sum()),
        "best_ms": min(times),
        "times_ms": times,
        "budget_ms": BALL_QUERY_BUDGET_MS,
    }


def run_all(repeats: int = 3) -> dict:
    return {"fps": bench_fps(repeats), "ball_queries": bench_ball_queries(repeats)}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", help="write results JSON here")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    results = run_all(args.repeats)
    for name, r in results.items():
        flag = "within budget" if r["best_ms"] <= r["budget_ms"] else "over budget"
        print(f"{name}: best {r['best_ms']:.1f} ms (budget {r['budget_ms']:.0f} ms, {flag})")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(results, f, indent=1)
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
