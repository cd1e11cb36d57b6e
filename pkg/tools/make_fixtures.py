"""Regenerate the committed fixtures under fixtures/.

Everything here is deterministic; re-running must reproduce the committed
files byte-for-byte.
"""

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from raygroup.grouping import toy_featurizer
from raygroup.pipeline import canonical_json
from raygroup.scene import (
    Box3D,
    Detection,
    PointCloud,
    SceneAnnotation,
    save_boxes,
    save_detections,
    save_scene,
)
from raygroup.synth import SceneSpec, generate_scene

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


def make_unit_room():
    """One unit cube resting on the floor, its 8 corners as surface points."""
    box = Box3D(center=(2.0, 2.0, 0.5), size=(1.0, 1.0, 1.0), class_id=0)
    corners = box.corners()
    cloud = PointCloud(corners)
    annotation = SceneAnnotation((box,), np.zeros(8, dtype=np.int64))
    save_scene(cloud, annotation, FIXTURES / "unit_room.pts")


def make_fbs_2048():
    """2048-point scene sized for the (1024, 896, 128) sampling stage."""
    spec = SceneSpec(
        room_extent=(8.0, 8.0, 3.0),
        n_objects=6,
        points_per_object=256,
        background_points=512,
        rng_seed=20240501,
    )
    cloud, annotation = generate_scene(spec)
    assert len(cloud) == 2048, len(cloud)
    save_scene(cloud, annotation, FIXTURES / "fbs_2048.pts")


def make_eval_fixture():
    """Hand-checkable 3-class detection set (plus one zero-GT class).

    Expected, computed by hand from the matching rules:
      @0.25  class0 AP = 5/6, class1 AP = 0.5, class2 AP = 1.0, mAP = 7/9
      @0.5   class0 AP = 0.5, class1 AP = 0.5, class2 AP = 1.0, mAP = 2/3
    """
    unit = (1.0, 1.0, 1.0)
    gt = [
        Box3D((0.0, 0.0, 0.0), unit, 0),
        Box3D((5.0, 0.0, 0.0), unit, 0),
        Box3D((0.0, 5.0, 0.0), unit, 1),
        Box3D((0.0, 10.0, 0.0), unit, 2),
    ]
    dets = [
        Detection(Box3D((0.0, 0.0, 0.0), unit, 0), 0.9, 0),  # exact match gt0
        Detection(Box3D((10.0, 0.0, 0.0), unit, 0), 0.8, 0),  # far: FP
        Detection(Box3D((5.5, 0.0, 0.0), unit, 0), 0.7, 0),  # IoU 1/3 with gt1
        Detection(Box3D((10.0, 5.0, 0.0), unit, 1), 0.95, 1),  # FP before the TP
        Detection(Box3D((0.0, 5.0, 0.0), unit, 1), 0.5, 1),  # exact match gt2
        Detection(Box3D((0.0, 10.0, 0.0), unit, 2), 1.0, 2),  # exact match gt3
        Detection(Box3D((0.0, 15.0, 0.0), unit, 3), 0.6, 3),  # class with no GT
    ]
    save_boxes(gt, FIXTURES / "eval_gt.json")
    save_detections(dets, FIXTURES / "eval_dets.json")


def make_toy_feature_golden():
    """Snapshot of the positional featurizer on five fixed points."""
    pts = np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.25, -0.5, 2.0],
            [-1.5, 3.0, 0.75],
            [10.0, -10.0, 5.0],
        ]
    )
    feats = toy_featurizer(PointCloud(pts)).features
    golden = {
        "positions": [[float(v) for v in row] for row in pts],
        "features": [[float(v) for v in row] for row in feats],
    }
    (FIXTURES / "toy_features_golden.json").write_text(canonical_json(golden))


def make_example_config():
    config = {
        "P": 9,
        "K_c": 5,
        "K_f": 3,
        "M": 256,
        "fbs_schedule": [[1024, 896, 128]],
        "iou_thresholds": [0.25, 0.5],
        "rng_seed": 0,
    }
    (FIXTURES / "example_config.json").write_text(json.dumps(config, indent=1) + "\n")


if __name__ == "__main__":
    FIXTURES.mkdir(exist_ok=True)
    make_unit_room()
    make_fbs_2048()
    make_eval_fixture()
    make_toy_feature_golden()
    make_example_config()
    print(f"fixtures written to {FIXTURES}")
