import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from raygroup import PointCloud, SceneAnnotation, save_scene
from raygroup.config import PipelineConfig
from raygroup.errors import ParseError
from raygroup.pipeline import run_eval, run_pipeline
from raygroup.synth import SceneSpec, generate_scene, oracle_votes

from conftest import parse_ascii_ply

SCHEMAS = Path(__file__).resolve().parents[1] / "src" / "raygroup" / "schemas"


def _schema(name):
    return json.loads((SCHEMAS / name).read_text())


class TestConfig:
    def test_defaults_match_reference_configuration(self):
        cfg = PipelineConfig()
        assert cfg.P == 9
        assert cfg.K_c == 5 and cfg.K_f == 3
        assert cfg.anchor_radius == 0.2
        assert cfg.coarse_max_k == 8 and cfg.fine_max_k == 4
        assert cfg.M == 256
        assert cfg.positive_radius == 0.3
        assert cfg.fbs_schedule == ((1024, 896, 128),)
        assert cfg.iou_thresholds == (0.25, 0.5)

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text('{"P": 9, "bogus": 1}')
        with pytest.raises(ParseError, match="bogus"):
            PipelineConfig.from_json_file(p)

    def test_unknown_loss_weight_rejected(self):
        with pytest.raises(ParseError, match="nope"):
            PipelineConfig.from_dict({"loss_weights": {"nope": 1.0}})

    def test_partial_loss_weight_override(self):
        cfg = PipelineConfig.from_dict({"loss_weights": {"fbs": 7.0}})
        assert cfg.loss_weights.fbs == 7.0
        assert cfg.loss_weights.vote_reg == 10.0

    def test_round_trip_through_dict(self):
        cfg = PipelineConfig(P=5, M=16, fbs_schedule=((64, 48, 16),))
        again = PipelineConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_file_source_requires_path(self):
        with pytest.raises(Exception):
            PipelineConfig(scores_source="file")


def _write_empty_scene(tmp_path):
    cloud = PointCloud(np.empty((0, 3)))
    ann = SceneAnnotation((), np.empty(0, dtype=np.int64))
    save_scene(cloud, ann, tmp_path / "empty.pts")
    return tmp_path / "empty.pts"


class TestRunPipeline:
    def test_empty_scene(self, tmp_path):
        scene = _write_empty_scene(tmp_path)
        report = run_pipeline(PipelineConfig(), scene, tmp_path / "out")
        assert report["clusters"]["n_clusters"] == 0
        assert report["clusters"]["n_positive"] == 0
        assert report["losses"]["total"] == 0.0
        assert report["sampling"]["n_seeds"] == 0

    def test_unit_room_reference_counts(self, fixtures_dir, tmp_path):
        report = run_pipeline(
            PipelineConfig(), fixtures_dir / "unit_room.pts", tmp_path / "out"
        )
        assert report["clusters"]["n_positive"] >= 1
        for cluster in report["clusters"]["per_cluster"]:
            if cluster["positive"]:
                assert cluster["rays"] == 66
                assert cluster["coarse_anchors"] == 330
                assert cluster["fine_anchors"] == 198

    def test_byte_identical_reports(self, fixtures_dir, tmp_path):
        run_pipeline(PipelineConfig(), fixtures_dir / "unit_room.pts", tmp_path / "a")
        run_pipeline(PipelineConfig(), fixtures_dir / "unit_room.pts", tmp_path / "b")
        assert (tmp_path / "a/report.json").read_bytes() == (
            tmp_path / "b/report.json"
        ).read_bytes()

    def test_report_schema(self, fixtures_dir, tmp_path):
        report = run_pipeline(
            PipelineConfig(), fixtures_dir / "unit_room.pts", tmp_path / "out"
        )
        jsonschema.validate(report, _schema("report.schema.json"))
        empty = run_pipeline(
            PipelineConfig(), _write_empty_scene(tmp_path), tmp_path / "out2"
        )
        jsonschema.validate(empty, _schema("report.schema.json"))

    def test_reference_parity_block(self, fixtures_dir, tmp_path):
        report = run_pipeline(
            PipelineConfig(), fixtures_dir / "unit_room.pts", tmp_path / "out"
        )
        parity = report["reference_parity"]
        assert parity["effective"] == {"N": 66, "K_c": 5, "K_f": 3, "M": 256}
        assert parity["matches_reference"] is True

    def test_file_sources_match_oracle_sources(self, tmp_path):
        cloud, ann = generate_scene(
            SceneSpec(n_objects=2, points_per_object=64, background_points=64, rng_seed=12)
        )
        scene = tmp_path / "scene.pts"
        save_scene(cloud, ann, scene)
        scores = (ann.instance_ids >= 0).astype(float).tolist()
        votes = oracle_votes(cloud, ann).positions.tolist()
        (tmp_path / "scores.json").write_text(json.dumps(scores))
        (tmp_path / "votes.json").write_text(json.dumps(votes))
        cfg_oracle = PipelineConfig(M=8, fbs_schedule=((96, 64, 16),))
        cfg_file = PipelineConfig(
            M=8,
            fbs_schedule=((96, 64, 16),),
            scores_source="file",
            scores_path=str(tmp_path / "scores.json"),
            votes_source="file",
            votes_path=str(tmp_path / "votes.json"),
        )
        r_oracle = run_pipeline(cfg_oracle, scene, tmp_path / "o")
        r_file = run_pipeline(cfg_file, scene, tmp_path / "f")
        del r_oracle["config"], r_file["config"]
        assert r_oracle == r_file

    def test_ply_dumps(self, fixtures_dir, tmp_path):
        run_pipeline(
            PipelineConfig(),
            fixtures_dir / "unit_room.pts",
            tmp_path / "out",
            write_ply=True,
        )
        pts, colors = parse_ascii_ply(tmp_path / "out" / "scene.ply")
        assert len(pts) == 8
        anchors, anchor_colors = parse_ascii_ply(tmp_path / "out" / "anchors.ply")
        assert len(anchors) == 8 * (330 + 198)

    def test_errors_identify_their_stage(self, tmp_path):
        cloud, ann = generate_scene(
            SceneSpec(n_objects=1, points_per_object=16, background_points=16, rng_seed=2)
        )
        save_scene(cloud, ann, tmp_path / "s.pts")
        (tmp_path / "short.json").write_text("[0.5, 0.5]")  # wrong length
        cfg = PipelineConfig(
            scores_source="file", scores_path=str(tmp_path / "short.json")
        )
        from raygroup.errors import ValidationError

        with pytest.raises(ValidationError, match=r"\[scores\]"):
            run_pipeline(cfg, tmp_path / "s.pts", tmp_path / "out")

    def test_scene_without_boxes(self, tmp_path):
        cloud, ann = generate_scene(SceneSpec(n_objects=0, background_points=48, rng_seed=9))
        save_scene(cloud, ann, tmp_path / "bg.pts")
        report = run_pipeline(
            PipelineConfig(M=4, fbs_schedule=((32, 16, 8),)),
            tmp_path / "bg.pts",
            tmp_path / "out",
        )
        assert report["clusters"]["n_positive"] == 0
        assert report["sampling"]["fbs_foreground_recall"] is None
        assert all(not c["positive"] for c in report["clusters"]["per_cluster"])

    def test_scale_clamp_for_negative_clusters(self, tmp_path):
        # A scene whose cluster centers sit far from the only box: all
        # clusters negative, rays emitted at the minimum scale.
        cloud, ann = generate_scene(
            SceneSpec(n_objects=1, points_per_object=16, background_points=32, rng_seed=3)
        )
        save_scene(cloud, ann, tmp_path / "s.pts")
        report = run_pipeline(
            PipelineConfig(M=4, fbs_schedule=((24, 12, 4),)),
            tmp_path / "s.pts",
            tmp_path / "out",
        )
        for cluster in report["clusters"]["per_cluster"]:
            if not cluster["positive"]:
                assert cluster["scale"] == 0.05


class TestRunEval:
    def test_detections_equal_gt(self, tmp_path, fixtures_dir):
        gt_path = fixtures_dir / "eval_gt.json"
        gt = json.loads(gt_path.read_text())
        dets = [dict(rec, score=1.0) for rec in gt]
        dets_path = tmp_path / "dets.json"
        dets_path.write_text(json.dumps(dets))
        report = run_eval(dets_path, gt_path, (0.25, 0.5))
        assert report["map"]["0.25"] == 1.0
        assert report["map"]["0.5"] == 1.0

    def test_empty_detections(self, tmp_path, fixtures_dir):
        dets_path = tmp_path / "none.json"
        dets_path.write_text("[]")
        report = run_eval(dets_path, fixtures_dir / "eval_gt.json", (0.25,))
        assert report["map"]["0.25"] == 0.0

    def test_committed_fixture_hand_values(self, fixtures_dir):
        report = run_eval(
            fixtures_dir / "eval_dets.json", fixtures_dir / "eval_gt.json", (0.25, 0.5)
        )
        at25 = report["per_class"]["0.25"]
        assert at25["0"]["ap"] == pytest.approx(5 / 6, abs=1e-12)
        assert at25["1"]["ap"] == 0.5
        assert at25["2"]["ap"] == 1.0
        assert at25["3"]["n_gt"] == 0
        assert report["map"]["0.25"] == pytest.approx(7 / 9, abs=1e-12)
        at50 = report["per_class"]["0.5"]
        assert at50["0"]["ap"] == 0.5
        assert report["map"]["0.5"] == pytest.approx(2 / 3, abs=1e-12)

    def test_eval_report_schema(self, fixtures_dir):
        report = run_eval(
            fixtures_dir / "eval_dets.json", fixtures_dir / "eval_gt.json", (0.25, 0.5)
        )
        jsonschema.validate(report, _schema("eval_report.schema.json"))


def _cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "raygroup.cli", *args],
        capture_output=True,
        text=True,
    )


class TestCli:
    def test_run_and_eval_happy_path(self, fixtures_dir, tmp_path):
        proc = _cli(
            "run",
            "--scene",
            str(fixtures_dir / "unit_room.pts"),
            "--out",
            str(tmp_path / "out"),
            "--ply",
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "out" / "report.json").exists()
        assert (tmp_path / "out" / "scene.ply").exists()

        proc = _cli(
            "eval",
            "--dets",
            str(fixtures_dir / "eval_dets.json"),
            "--gt",
            str(fixtures_dir / "eval_gt.json"),
            "--iou",
            "0.25,0.5",
            "--out",
            str(tmp_path / "eval.json"),
        )
        assert proc.returncode == 0, proc.stderr
        report = json.loads((tmp_path / "eval.json").read_text())
        assert report["map"]["0.25"] == pytest.approx(7 / 9, abs=1e-12)

    def test_synth_round_trip(self, tmp_path):
        spec = {"n_objects": 2, "points_per_object": 32, "background_points": 16,
                "rng_seed": 4}
        (tmp_path / "spec.json").write_text(json.dumps(spec))
        proc = _cli(
            "synth", "--spec", str(tmp_path / "spec.json"), "--out", str(tmp_path / "s.pts")
        )
        assert proc.returncode == 0, proc.stderr
        from raygroup import load_scene

        cloud, ann = load_scene(tmp_path / "s.pts")
        assert len(cloud) == 2 * 32 + 16

    def test_bad_config_exits_2(self, fixtures_dir, tmp_path):
        (tmp_path / "cfg.json").write_text('{"wrong": 1}')
        proc = _cli(
            "run",
            "--config",
            str(tmp_path / "cfg.json"),
            "--scene",
            str(fixtures_dir / "unit_room.pts"),
            "--out",
            str(tmp_path / "out"),
        )
        assert proc.returncode == 2

    def test_missing_scene_exits_3(self, tmp_path):
        proc = _cli(
            "run", "--scene", str(tmp_path / "missing.pts"), "--out", str(tmp_path / "o")
        )
        assert proc.returncode == 3

    def test_malformed_iou_exits_2(self, fixtures_dir):
        proc = _cli(
            "eval",
            "--dets",
            str(fixtures_dir / "eval_dets.json"),
            "--gt",
            str(fixtures_dir / "eval_gt.json"),
            "--iou",
            "0.25,banana",
        )
        assert proc.returncode == 2

    def test_config_from_fixture(self, fixtures_dir, tmp_path):
        proc = _cli(
            "run",
            "--config",
            str(fixtures_dir / "example_config.json"),
            "--scene",
            str(fixtures_dir / "unit_room.pts"),
            "--out",
            str(tmp_path / "out"),
        )
        assert proc.returncode == 0, proc.stderr
