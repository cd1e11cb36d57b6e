"""End-to-end pipeline runner and the detection evaluation entry point.

``run_pipeline`` wires the whole geometry path together on one scene:
featurize, score, foreground-biased downsampling, votes, candidate
sampling, vote grouping, positive assignment, ray emission, coarse and
fine anchors with pooled local features and existence labels, feature
masking and ordered concatenation, then a loss report and recall
diagnostics.  Learned components are stood in for by the oracle scorer /
voter (or fixture files), so the run is fully deterministic: the same
config, scene, and seed produce byte-identical ``report.json``.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import grouping, losses, metrics, rays, sampling, synth
from .config import PipelineConfig
from .errors import IoError, ParseError, RaygroupError, ValidationError
from .scene import (
    PointCloud,
    SceneAnnotation,
    export_ply,
    load_boxes,
    load_detections,
    load_scene,
)

__all__ = ["run_pipeline", "run_eval", "canonical_json"]

_REFERENCE_DEFAULTS = {"N": 66, "K_c": 5, "K_f": 3, "M": 256}
_PROB_FLOOR = 1e-12


def canonical_json(data) -> str:
    """Stable serialization: sorted keys, fixed indent, trailing newline."""
    return json.dumps(data, sort_keys=True, indent=1) + "\n"


@contextmanager
def _stage(name: str):
    """Tag library errors with the pipeline stage they escaped from."""
    try:
        yield
    except RaygroupError as e:
        raise type(e)(f"[{name}] {e}") from e


def _jsonify(value):
    """Recursively convert numpy scalars/arrays for json.dumps."""
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _mean_binary_ce(p_fg: np.ndarray, labels: np.ndarray) -> float:
    """Mean -log p(label) for per-point binary distributions (1-p, p)."""
    if len(p_fg) == 0:
        return 0.0
    p_label = np.where(labels == 1, p_fg, 1.0 - p_fg)
    return float(np.mean(-np.log(np.maximum(p_label, _PROB_FLOOR))))


def _load_scores(config: PipelineConfig, annotation: SceneAnnotation, n: int) -> np.ndarray:
    if config.scores_source == "oracle":
        return (annotation.instance_ids >= 0).astype(np.float64)
    try:
        data = json.loads(Path(config.scores_path).read_text())
    except OSError as e:
        raise IoError(f"cannot read scores {config.scores_path!r}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{config.scores_path}: invalid JSON: {e}") from e
    scores = np.asarray(data, dtype=np.float64).reshape(-1)
    if len(scores) != n:
        raise ValidationError(
            f"scores file has {len(scores)} entries for {n} points"
        )
    if np.any((scores < 0) | (scores > 1)):
        raise ValidationError("scores must be in [0, 1]")
    return scores


def _load_votes(config: PipelineConfig, cloud: PointCloud, annotation: SceneAnnotation) -> np.ndarray:
    if config.votes_source == "oracle":
        return synth.oracle_votes(cloud, annotation).positions
    try:
        data = json.loads(Path(config.votes_path).read_text())
    except OSError as e:
        raise IoError(f"cannot read votes {config.votes_path!r}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{config.votes_path}: invalid JSON: {e}") from e
    votes = np.asarray(data, dtype=np.float64)
    if votes.shape != (len(cloud), 3):
        raise ValidationError(
            f"votes file has shape {votes.shape}, expected ({len(cloud)}, 3)"
        )
    return votes


def _run_fbs_schedule(
    config: PipelineConfig, positions: np.ndarray, scores: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, list[dict], list[float]]:
    """Apply the schedule stage by stage, clamping each stage to the points
    actually available.  Returns the surviving indices, per-stage stats,
    and the per-stage segmentation cross entropy (over stage inputs)."""
    current = np.arange(len(positions), dtype=np.int64)
    stages = []
    stage_ce = []
    for kappa, alpha, beta in config.fbs_schedule:
        n_cur = len(current)
        if n_cur:
            stage_ce.append(_mean_binary_ce(scores[current], labels[current]))
        k_eff = min(kappa, n_cur)
        a_eff = min(alpha, k_eff)
        b_eff = min(beta, n_cur - k_eff)
        if a_eff + b_eff == 0:
            stages.append(
                {"kappa": k_eff, "alpha": a_eff, "beta": b_eff, "selected": 0}
            )
            current = current[:0]
            continue
        result = sampling.foreground_biased_sampling(
            positions[current], scores[current], k_eff, a_eff, b_eff
        )
        current = current[result.indices]
        stages.append(
            {
                "kappa": k_eff,
                "alpha": a_eff,
                "beta": b_eff,
                "selected": len(current),
                "foreground_sourced": result.count(sampling.SampleSource.FBS_FOREGROUND),
                "background_sourced": result.count(sampling.SampleSource.FBS_BACKGROUND),
            }
        )
    return current, stages, stage_ce


def run_pipeline(
    config: PipelineConfig, scene_path, out_dir, write_ply: bool = False
) -> dict:
    """Run the full pipeline on one scene and write ``report.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _stage("load-scene"):
        cloud, annotation = load_scene(scene_path)
    n = len(cloud)

    feat_cloud = grouping.toy_featurizer(cloud)
    with _stage("scores"):
        scores = _load_scores(config, annotation, n)
    fg_labels = (annotation.instance_ids >= 0).astype(np.int64)
    with _stage("foreground-sampling"):
        seeds, stage_stats, fbs_stage_ce = _run_fbs_schedule(
            config, cloud.positions, scores, fg_labels
        )

    fbs_fg_recall = None
    fps_fg_recall = None
    if len(seeds) and len(annotation.boxes):
        fbs_fg_recall = metrics.foreground_recall(seeds, annotation)
        plain = sampling.fps_indices(cloud.positions, len(seeds), 0)
        fps_fg_recall = metrics.foreground_recall(plain, annotation)

    seed_cloud = PointCloud(
        cloud.positions[seeds], feat_cloud.features[seeds] if n else None
    )
    with _stage("votes"):
        all_votes = _load_votes(config, cloud, annotation) if n else np.empty((0, 3))
    votes = all_votes[seeds]

    clusters = []
    if len(seeds):
        with _stage("grouping"):
            m_eff = min(config.M, len(seeds))
            centers, _ = grouping.sample_candidates(
                votes, seed_cloud.positions, m_eff, config.candidate_mode
            )
            clusters = grouping.group_votes(centers, votes, config.vote_radius)
            clusters = [
                replace(
                    c,
                    feature=seed_cloud.features[c.member_seed_indices].mean(axis=0)
                    if len(c.member_seed_indices)
                    else None,
                )
                for c in clusters
            ]
            clusters = grouping.assign_positive_clusters(
                clusters, annotation.boxes, config.positive_radius
            )

    per_cluster = []
    surface_recalls = []
    c_cls_terms: list[float] = []
    f_cls_terms: list[float] = []
    scale_preds = []
    ply_anchor_points = []
    ply_anchor_labels = []
    for cluster in clusters:
        assigned = cluster.assigned_box if cluster.assigned_box is not None else -1
        scale = rays.clamp_scale(
            cluster.scale if cluster.positive else 0.0, config.min_scale
        )
        scale_preds.append(scale)
        with _stage("ray-grouping"):
            bundle = rays.emit_rays(cluster.center, scale, config.P, config.azimuth_factor)
            coarse = sampling.coarse_anchors(bundle, config.K_c)
            coarse_feats = grouping.pool_anchor_features(
                coarse, seed_cloud, config.anchor_radius, config.coarse_max_k
            )
            coarse_labels = grouping.anchor_mask_labels(
                coarse, annotation, cloud, config.anchor_radius, assigned
            )
            fine = sampling.fine_anchors(coarse_labels, config.K_f, bundle)
            fine_feats = grouping.pool_anchor_features(
                fine, seed_cloud, config.anchor_radius, config.fine_max_k
            )
            fine_labels = grouping.anchor_mask_labels(
                fine, annotation, cloud, config.anchor_radius, assigned
            )
            coarse_block = grouping.mask_features(coarse_feats, coarse_labels, "coarse")
            fine_block = grouping.mask_features(fine_feats, fine_labels, "fine")
            coarse_vec = grouping.ordered_concat(coarse_block)
            fine_vec = grouping.ordered_concat(fine_block)

        # Oracle mask "predictions" equal the labels, so the per-anchor
        # cross entropy is the floor term of a perfect classifier.
        c_cls_terms.append(_mean_binary_ce(coarse_labels.astype(np.float64), coarse_labels))
        f_cls_terms.append(_mean_binary_ce(fine_labels.astype(np.float64), fine_labels))

        recall = None
        if cluster.positive:
            recall = metrics.surface_point_recall(
                (coarse, fine), config.anchor_radius, annotation, cloud, assigned
            )
            surface_recalls.append(recall)
        per_cluster.append(
            {
                "center": [float(v) for v in cluster.center],
                "positive": bool(cluster.positive),
                "assigned_box": assigned,
                "scale": float(scale),
                "n_members": len(cluster.member_seed_indices),
                "rays": bundle.N,
                "coarse_anchors": coarse.N * coarse.K,
                "fine_anchors": fine.N * fine.K,
                "coarse_positive": int(coarse_labels.sum()),
                "fine_positive": int(fine_labels.sum()),
                "coarse_feature_l2": float(np.linalg.norm(coarse_vec)),
                "fine_feature_l2": float(np.linalg.norm(fine_vec)),
                "surface_recall": recall,
            }
        )
        if write_ply:
            ply_anchor_points.append(coarse.flat_positions())
            ply_anchor_points.append(fine.flat_positions())
            ply_anchor_labels.append(coarse_labels.reshape(-1))
            ply_anchor_labels.append(fine_labels.reshape(-1))

    with _stage("losses"):
        terms = {name: 0.0 for name in losses.LEAF_TERMS}
        terms["fbs"] = float(np.mean(fbs_stage_ce)) if fbs_stage_ce else 0.0
        terms["scale_reg"] = losses.scale_loss(clusters, scale_preds) if clusters else 0.0
        terms["c_cls"] = float(np.mean(c_cls_terms)) if c_cls_terms else 0.0
        terms["f_cls"] = float(np.mean(f_cls_terms)) if f_cls_terms else 0.0
        total, breakdown = losses.composite_loss(terms, config.loss_weights)

    n_positive = sum(1 for c in clusters if c.positive)
    effective = {
        "N": rays.ray_count(config.P, config.azimuth_factor),
        "K_c": config.K_c,
        "K_f": config.K_f,
        "M": config.M,
    }
    report = {
        "config": config.to_dict(),
        "scene": {
            "path": str(scene_path),
            "n_points": n,
            "n_boxes": len(annotation.boxes),
        },
        "sampling": {
            "stages": stage_stats,
            "n_seeds": len(seeds),
            "fbs_foreground_recall": fbs_fg_recall,
            "fps_foreground_recall": fps_fg_recall,
        },
        "clusters": {
            "n_clusters": len(clusters),
            "n_positive": n_positive,
            "per_cluster": per_cluster,
        },
        "losses": breakdown,
        "recall": {
            "surface_recall_mean": float(np.mean(surface_recalls))
            if surface_recalls
            else None,
        },
        "reference_parity": {
            "effective": effective,
            "reference": dict(_REFERENCE_DEFAULTS),
            "matches_reference": effective == _REFERENCE_DEFAULTS,
        },
    }
    report = _jsonify(report)
    try:
        (out_dir / "report.json").write_text(canonical_json(report))
    except OSError as e:
        raise IoError(f"cannot write report: {e}") from e

    if write_ply:
        _write_ply_dumps(out_dir, cloud, annotation, ply_anchor_points, ply_anchor_labels)
    return report


_PALETTE = np.array(
    [
        [230, 60, 60],
        [60, 160, 230],
        [90, 200, 90],
        [240, 180, 40],
        [180, 90, 220],
        [70, 210, 200],
        [240, 120, 180],
        [150, 150, 60],
    ]
)


def _write_ply_dumps(out_dir, cloud, annotation, anchor_points, anchor_labels):
    colors = np.full((len(cloud), 3), 160)
    for b in range(len(annotation.boxes)):
        colors[annotation.instance_ids == b] = _PALETTE[b % len(_PALETTE)]
    export_ply(cloud.positions, colors, out_dir / "scene.ply")
    if anchor_points:
        pts = np.concatenate(anchor_points, axis=0)
        labels = np.concatenate(anchor_labels)
        col = np.where(labels[:, None] == 1, [[40, 220, 40]], [[220, 40, 40]])
        export_ply(pts, col, out_dir / "anchors.ply")


def run_eval(dets_path, gt_path, iou_thresholds=(0.25, 0.5)) -> dict:
    """Per-class AP and mAP at each IoU threshold, as a JSON-ready dict."""
    detections = load_detections(dets_path)
    gt_boxes = load_boxes(gt_path)
    classes = sorted(
        {b.class_id for b in gt_boxes} | {d.class_id for d in detections}
    )
    per_class = {}
    maps = {}
    for thr in iou_thresholds:
        curves = {
            c: metrics.average_precision(detections, gt_boxes, thr, c)
            for c in classes
        }
        per_class[repr(float(thr))] = {
            str(c): {"ap": curve.ap, "n_gt": curve.n_gt}
            for c, curve in curves.items()
        }
        maps[repr(float(thr))] = metrics.mean_average_precision(curves)
    return _jsonify(
        {
            "n_detections": len(detections),
            "n_gt": len(gt_boxes),
            "classes": classes,
            "per_class": per_class,
            "map": maps,
        }
    )
