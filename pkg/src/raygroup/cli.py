"""Command-line entry points.

    raygroup run   --config cfg.json --scene scene.pts --out outdir [--ply]
    raygroup eval  --dets dets.json --gt gt.json [--iou 0.25,0.5] [--out f]
    raygroup synth --spec spec.json --out scene.pts

Exit codes: 0 success, 2 validation/parse error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import PipelineConfig
from .errors import (
    EmptyEvaluation,
    GenerationFailure,
    InvalidParameter,
    IoError,
    ParseError,
    RaygroupError,
    ValidationError,
)
from .pipeline import canonical_json, run_eval, run_pipeline
from .scene import save_scene
from .synth import SceneSpec, generate_scene

_VALIDATION_ERRORS = (
    ParseError,
    ValidationError,
    InvalidParameter,
    EmptyEvaluation,
    GenerationFailure,
)


def _cmd_run(args) -> int:
    config = (
        PipelineConfig.from_json_file(args.config) if args.config else PipelineConfig()
    )
    report = run_pipeline(config, args.scene, args.out, write_ply=args.ply)
    clusters = report["clusters"]
    print(
        f"wrote {Path(args.out) / 'report.json'}: "
        f"{report['scene']['n_points']} points, "
        f"{clusters['n_clusters']} clusters "
        f"({clusters['n_positive']} positive), "
        f"total loss {report['losses']['total']:.6g}"
    )
    return 0


def _cmd_eval(args) -> int:
    try:
        thresholds = tuple(float(t) for t in args.iou.split(","))
    except ValueError as e:
        raise ParseError(f"--iou: {e}") from e
    if not thresholds:
        raise ParseError("--iou: need at least one threshold")
    report = run_eval(args.dets, args.gt, thresholds)
    text = canonical_json(report)
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as e:
            raise IoError(f"cannot write report {args.out!r}: {e}") from e
    sys.stdout.write(text)
    return 0


def _cmd_synth(args) -> int:
    try:
        data = json.loads(Path(args.spec).read_text())
    except OSError as e:
        raise IoError(f"cannot read spec {args.spec!r}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{args.spec}: invalid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ParseError(f"{args.spec}: spec must be a JSON object")
    known = set(SceneSpec.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ParseError(f"unknown spec keys: {sorted(unknown)}")
    if "size_range" in data:
        sr = data["size_range"]
        data["size_range"] = (
            tuple(sr) if sr and not isinstance(sr[0], list) else tuple(tuple(p) for p in sr)
        )
    if "room_extent" in data:
        data["room_extent"] = tuple(data["room_extent"])
    cloud, annotation = generate_scene(SceneSpec(**data))
    save_scene(cloud, annotation, args.out)
    print(f"wrote {len(cloud)} points, {len(annotation.boxes)} boxes to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raygroup",
        description="Deterministic ray-based grouping pipeline for 3D point clouds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full pipeline on a scene")
    p_run.add_argument("--config", help="pipeline config JSON (defaults if omitted)")
    p_run.add_argument("--scene", required=True, help="scene file (.pts/.ann stem)")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--ply", action="store_true", help="write PLY visual dumps")
    p_run.set_defaults(func=_cmd_run)

    p_eval = sub.add_parser("eval", help="evaluate detections against ground truth")
    p_eval.add_argument("--dets", required=True, help="detections JSON")
    p_eval.add_argument("--gt", required=True, help="ground-truth boxes JSON")
    p_eval.add_argument("--iou", default="0.25,0.5", help="comma-separated thresholds")
    p_eval.add_argument("--out", help="also write the report to this file")
    p_eval.set_defaults(func=_cmd_eval)

    p_synth = sub.add_parser("synth", help="generate a synthetic scene")
    p_synth.add_argument("--spec", required=True, help="scene spec JSON")
    p_synth.add_argument("--out", required=True, help="output scene path")
    p_synth.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except IoError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except RaygroupError as e:  # any other library failure is a validation issue
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
