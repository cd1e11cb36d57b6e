import numpy as np
import pytest
from hypothesis import given, strategies as st

from raygroup import (
    Box3D,
    Detection,
    EmptyEvaluation,
    InvalidParameter,
    PointCloud,
    SceneAnnotation,
    average_precision,
    coarse_anchors,
    emit_rays,
    foreground_recall,
    iou3d,
    mean_average_precision,
    nms3d,
    scale_target,
    surface_point_recall,
)
from raygroup.metrics import PRCurve
from raygroup.sampling import AnchorSet
from raygroup.synth import SceneSpec, generate_scene, oracle_iou_mc

UNIT = (1.0, 1.0, 1.0)


def det(center, score, class_id=0, size=UNIT):
    return Detection(Box3D(center, size, class_id), score, class_id)


class TestIoU3D:
    def test_identical(self):
        box = Box3D([1, 2, 3], [0.5, 1.5, 2.5])
        assert iou3d(box, box) == 1.0

    def test_disjoint(self):
        assert iou3d(Box3D([0, 0, 0], UNIT), Box3D([5, 0, 0], UNIT)) == 0.0

    def test_touching_faces(self):
        assert iou3d(Box3D([0, 0, 0], UNIT), Box3D([1.0, 0, 0], UNIT)) == 0.0

    def test_half_overlap_unit_cubes(self):
        a = Box3D([0, 0, 0], UNIT)
        b = Box3D([0.5, 0, 0], UNIT)
        assert iou3d(a, b) == 1.0 / 3.0

    def test_symmetry_and_translation_invariance(self, rng):
        for _ in range(50):
            c1, c2 = rng.uniform(-2, 2, (2, 3))
            s1, s2 = rng.uniform(0.2, 2.0, (2, 3))
            shift = rng.uniform(-10, 10, 3)
            a, b = Box3D(c1, s1), Box3D(c2, s2)
            assert iou3d(a, b) == iou3d(b, a)
            a2, b2 = Box3D(c1 + shift, s1), Box3D(c2 + shift, s2)
            assert iou3d(a, b) == pytest.approx(iou3d(a2, b2), abs=1e-12)

    def test_monte_carlo_cross_check(self):
        a = Box3D([0, 0, 0], UNIT)
        b = Box3D([0.5, 0, 0], UNIT)
        est, se = oracle_iou_mc(a, b, 1_000_000, rng_seed=11)
        assert abs(est - 1.0 / 3.0) < 2e-3
        assert 0.0 < se < 1e-3

    @given(
        ca=st.tuples(*[st.floats(-5, 5) for _ in range(3)]),
        cb=st.tuples(*[st.floats(-5, 5) for _ in range(3)]),
        sa=st.tuples(*[st.floats(0.1, 4) for _ in range(3)]),
        sb=st.tuples(*[st.floats(0.1, 4) for _ in range(3)]),
    )
    def test_bounds_and_symmetry_property(self, ca, cb, sa, sb):
        a, b = Box3D(ca, sa), Box3D(cb, sb)
        v = iou3d(a, b)
        assert 0.0 <= v <= 1.0
        assert v == iou3d(b, a)
        assert iou3d(a, a) == 1.0


def reference_nms(detections, threshold):
    """Independent greedy re-implementation for cross-checking."""
    order = sorted(
        range(len(detections)), key=lambda i: (-detections[i].score, i)
    )
    kept = []
    for i in order:
        suppressed = False
        for j in kept:
            if detections[j].class_id != detections[i].class_id:
                continue
            if iou3d(detections[i].box, detections[j].box) > threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
    return kept


class TestNMS3D:
    def test_single_detection_kept(self):
        assert nms3d([det([0, 0, 0], 0.5)], 0.25).tolist() == [0]

    def test_duplicate_suppressed(self):
        dets = [det([0, 0, 0], 0.9), det([0, 0, 0], 0.8)]
        assert nms3d(dets, 0.25).tolist() == [0]

    def test_classes_do_not_suppress_each_other(self):
        dets = [det([0, 0, 0], 0.9, class_id=0), det([0, 0, 0], 0.8, class_id=1)]
        assert sorted(nms3d(dets, 0.25).tolist()) == [0, 1]

    def test_matches_reference_on_random_sets(self, rng):
        for _ in range(20):
            dets = [
                det(
                    rng.uniform(0, 2, 3),
                    float(rng.uniform(0, 1)),
                    class_id=int(rng.integers(0, 3)),
                    size=rng.uniform(0.5, 1.5, 3),
                )
                for _ in range(50)
            ]
            got = nms3d(dets, 0.25).tolist()
            assert got == reference_nms(dets, 0.25)

    def test_kept_set_stable_under_permutation(self, rng):
        dets = [
            det(rng.uniform(0, 2, 3), float(s), size=rng.uniform(0.5, 1.5, 3))
            for s in np.linspace(0.1, 0.99, 30)  # distinct scores
        ]
        kept = set(nms3d(dets, 0.3).tolist())
        perm = rng.permutation(30)
        kept_perm = {int(perm[i]) for i in range(30)}  # noqa: F841
        permuted = [dets[i] for i in perm]
        kept2 = {int(perm[j]) for j in nms3d(permuted, 0.3).tolist()}
        assert kept == kept2

    def test_threshold_validation(self):
        with pytest.raises(InvalidParameter):
            nms3d([det([0, 0, 0], 0.5)], 1.5)


class TestAveragePrecision:
    GT = [Box3D([0, 0, 0], UNIT, 0)]

    def test_perfect_detections(self):
        gts = [Box3D([0, 0, 0], UNIT, 0), Box3D([5, 0, 0], UNIT, 0)]
        dets = [det([0, 0, 0], 1.0), det([5, 0, 0], 1.0)]
        curve = average_precision(dets, gts, 0.25, class_id=0)
        assert curve.ap == 1.0

    def test_tp_then_fp(self):
        dets = [det([0, 0, 0], 0.9), det([9, 9, 9], 0.8)]
        curve = average_precision(dets, self.GT, 0.25, class_id=0)
        assert curve.recall.tolist() == [1.0, 1.0]
        assert curve.precision.tolist() == [1.0, 0.5]
        assert curve.ap == 1.0

    def test_fp_then_tp(self):
        dets = [det([9, 9, 9], 0.9), det([0, 0, 0], 0.8)]
        curve = average_precision(dets, self.GT, 0.25, class_id=0)
        assert curve.ap == 0.5

    def test_eleven_point_variant_agrees_on_fixtures(self):
        dets_a = [det([0, 0, 0], 0.9), det([9, 9, 9], 0.8)]
        dets_b = [det([9, 9, 9], 0.9), det([0, 0, 0], 0.8)]
        assert average_precision(dets_a, self.GT, 0.25, 0, eleven_point=True).ap == 1.0
        assert average_precision(dets_b, self.GT, 0.25, 0, eleven_point=True).ap == 0.5

    def test_duplicate_matches_count_once(self):
        dets = [det([0, 0, 0], 0.9), det([0, 0, 0], 0.8)]
        curve = average_precision(dets, self.GT, 0.25, class_id=0)
        assert curve.recall.tolist() == [1.0, 1.0]
        assert curve.precision.tolist() == [1.0, 0.5]

    def test_score_rescaling_invariance(self, rng):
        gts = [Box3D(rng.uniform(0, 5, 3), UNIT, 0) for _ in range(5)]
        dets = [
            det(rng.uniform(0, 5, 3), float(s))
            for s in rng.uniform(0.2, 0.9, 20)
        ]
        base = average_precision(dets, gts, 0.25, 0).ap
        rescaled = [
            Detection(d.box, d.score * 0.5 + 0.05, d.class_id) for d in dets
        ]
        assert average_precision(rescaled, gts, 0.25, 0).ap == base

    def test_recall_non_decreasing(self, rng):
        gts = [Box3D(rng.uniform(0, 4, 3), UNIT, 0) for _ in range(6)]
        dets = [det(rng.uniform(0, 4, 3), float(rng.uniform(0, 1))) for _ in range(30)]
        curve = average_precision(dets, gts, 0.25, 0)
        assert np.all(np.diff(curve.recall) >= 0)


class TestMeanAveragePrecision:
    def test_single_class(self):
        assert mean_average_precision({0: PRCurve([1.0], [1.0], 1.0, 2)}) == 1.0

    def test_two_classes(self):
        curves = {
            0: PRCurve([1.0], [1.0], 1.0, 1),
            1: PRCurve([0.0], [0.0], 0.0, 1),
        }
        assert mean_average_precision(curves) == 0.5

    def test_zero_gt_class_excluded(self):
        curves = {
            0: PRCurve([1.0], [1.0], 1.0, 1),
            7: PRCurve([], [], 0.0, 0),
        }
        assert mean_average_precision(curves) == 1.0

    def test_empty_evaluation(self):
        with pytest.raises(EmptyEvaluation):
            mean_average_precision({0: PRCurve([], [], 0.0, 0)})


class TestForegroundRecall:
    def _scene(self):
        box = Box3D([0, 0, 0], [2, 2, 2], 0)
        cloud = PointCloud([[0, 0, 0], [0.5, 0, 0], [9, 9, 9], [8, 8, 8]])
        ann = SceneAnnotation((box,), [0, 0, -1, -1])
        return cloud, ann

    def test_all_on_objects(self):
        _, ann = self._scene()
        assert foreground_recall([0, 1], ann) == 1.0

    def test_none_on_objects(self):
        _, ann = self._scene()
        assert foreground_recall([2, 3], ann) == 0.0

    def test_mixed(self):
        _, ann = self._scene()
        assert foreground_recall([0, 1, 2, 3], ann) == 0.5

    def test_validation(self):
        _, ann = self._scene()
        with pytest.raises(InvalidParameter):
            foreground_recall([], ann)
        with pytest.raises(InvalidParameter):
            foreground_recall([9], ann)


class TestSurfacePointRecall:
    def _scene(self):
        box = Box3D([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 0)
        cloud = PointCloud(box.corners())
        ann = SceneAnnotation((box,), np.zeros(8, dtype=np.int64))
        return cloud, ann, box

    def test_huge_radius_covers_everything(self):
        cloud, ann, box = self._scene()
        bundle = emit_rays(box.center, scale_target(box), P=2)
        anchors = coarse_anchors(bundle, 1)
        assert surface_point_recall(anchors, 5.0, ann, cloud, 0) == 1.0

    def test_zero_anchors(self):
        cloud, ann, box = self._scene()
        bundle = emit_rays(box.center, scale_target(box), P=2)
        empty = AnchorSet.from_t(bundle, "coarse", np.empty((2, 0)))
        assert surface_point_recall(empty, 0.2, ann, cloud, 0) == 0.0

    def test_union_of_stages(self):
        cloud, ann, box = self._scene()
        bundle = emit_rays(box.center, scale_target(box), P=9)
        coarse = coarse_anchors(bundle, 5)
        both = surface_point_recall((coarse, coarse), 0.2, ann, cloud, 0)
        single = surface_point_recall(coarse, 0.2, ann, cloud, 0)
        assert both == single

    def test_monotone_in_ray_count(self):
        spec = SceneSpec(
            room_extent=(6, 6, 3),
            n_objects=3,
            size_range=((0.5, 1.6), (0.5, 1.6), (0.5, 1.6)),
            points_per_object=400,
            background_points=200,
            rng_seed=1000,
        )
        cloud, ann = generate_scene(spec)
        values = []
        for P in (3, 5, 7, 9):
            recalls = []
            for b, box in enumerate(ann.boxes):
                bundle = emit_rays(box.center, scale_target(box), P)
                recalls.append(
                    surface_point_recall(coarse_anchors(bundle, 5), 0.2, ann, cloud, b)
                )
            values.append(float(np.mean(recalls)))
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))

    def test_validation(self):
        cloud, ann, _ = self._scene()
        bundle = emit_rays((0, 0, 0), 1.0, P=2)
        anchors = coarse_anchors(bundle, 1)
        with pytest.raises(InvalidParameter):
            surface_point_recall(anchors, 0.2, ann, cloud, 5)
