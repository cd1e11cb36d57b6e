import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from raygroup import (
    Box3D,
    InvalidParameter,
    LossWeights,
    composite_loss,
    corner_loss,
    cross_entropy,
    scale_loss,
    smooth_l1,
)
from raygroup.errors import MissingTerm, NonFiniteTerm, ShapeMismatch
from raygroup.grouping import VoteCluster
from raygroup.losses import LEAF_TERMS, RBFG_TERMS, BOX_TERMS, TOP_LEVEL_TERMS


def zero_terms() -> dict:
    return {name: 0.0 for name in LEAF_TERMS}


class TestSmoothL1:
    def test_zero_at_equality(self):
        assert smooth_l1(1.23, 1.23, 0.0625) == 0.0

    def test_branches_agree_at_beta(self):
        beta = 0.0625
        quad = (beta * beta) / (2 * beta)
        lin = beta - beta / 2
        assert quad == lin == smooth_l1(beta, 0.0, beta)

    def test_linear_branch_value(self):
        assert smooth_l1(1.0, 0.0, 0.0625) == 0.96875

    @pytest.mark.parametrize("beta", [0.0625, 0.04])
    def test_derivative_continuity_at_beta(self, beta):
        h = 1e-8

        def cd(x):
            return (smooth_l1(x + h, 0.0, beta) - smooth_l1(x - h, 0.0, beta)) / (2 * h)

        left, mid, right = cd(beta - 2 * h), cd(beta), cd(beta + 2 * h)
        assert abs(left - right) < 1e-6
        assert abs(mid - 1.0) < 1e-6

    @given(
        a=st.floats(-1e6, 1e6),
        b=st.floats(-1e6, 1e6),
        beta=st.floats(1e-4, 10.0),
    )
    def test_symmetry(self, a, b, beta):
        assert smooth_l1(a, b, beta) == smooth_l1(b, a, beta)

    def test_vectorized(self):
        out = smooth_l1(np.array([0.0, 1.0]), np.array([0.0, 0.0]), 0.0625)
        np.testing.assert_allclose(out, [0.0, 0.96875])

    def test_rejects_bad_beta(self):
        with pytest.raises(InvalidParameter):
            smooth_l1(0.0, 0.0, 0.0)


class TestCrossEntropy:
    def test_one_hot_is_zero(self):
        assert cross_entropy([0.0, 1.0], 1) == 0.0

    def test_uniform_two_classes(self):
        assert cross_entropy([0.5, 0.5], 0) == pytest.approx(math.log(2), rel=1e-15)

    def test_confidently_wrong(self):
        assert cross_entropy([0.9, 0.1], 1) == pytest.approx(2.302585092994046, rel=1e-12)

    def test_probability_floor(self):
        assert cross_entropy([1.0, 0.0], 1) == pytest.approx(-math.log(1e-12))

    def test_non_negative_and_validation(self):
        assert cross_entropy([0.25, 0.75], 0) > 0.0
        with pytest.raises(InvalidParameter):
            cross_entropy([0.5, 0.4], 0)
        with pytest.raises(InvalidParameter):
            cross_entropy([-0.1, 1.1], 0)
        with pytest.raises(InvalidParameter):
            cross_entropy([0.5, 0.5], 2)


def _cluster(positive: bool, scale: float | None) -> VoteCluster:
    return VoteCluster([0, 0, 0], [], positive=positive, scale=scale)


class TestScaleLoss:
    def test_exact_predictions(self):
        clusters = [_cluster(True, 0.7), _cluster(True, 1.4)]
        assert scale_loss(clusters, [0.7, 1.4]) == 0.0

    def test_no_positive_clusters(self):
        clusters = [_cluster(False, None), _cluster(False, None)]
        assert scale_loss(clusters, [1.0, 2.0]) == 0.0

    def test_two_positives_mixed_branches(self):
        beta = 0.0625
        clusters = [_cluster(True, 1.0), _cluster(True, 2.0), _cluster(False, None)]
        preds = [1.0 + beta, 2.0 + 2 * beta, 99.0]
        assert scale_loss(clusters, preds) == pytest.approx(beta, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            scale_loss([_cluster(True, 1.0)], [1.0, 2.0])


class TestCornerLoss:
    def test_identical_boxes(self):
        box = Box3D([0, 0, 0], [1, 2, 3])
        assert corner_loss(box, box) == 0.0

    def test_uniform_shift(self):
        a = Box3D([0, 0, 0], [1, 1, 1])
        b = Box3D([0.1, 0, 0], [1, 1, 1])
        # all 8 corner offsets are 0.1 -> quadratic branch of beta=1
        assert corner_loss(a, b) == pytest.approx(0.1**2 / 2, rel=1e-12)


class TestCompositeLoss:
    def test_all_zero(self):
        total, breakdown = composite_loss(zero_terms())
        assert total == 0.0
        assert breakdown["total"] == 0.0

    def test_unit_fbs_with_defaults(self):
        terms = zero_terms()
        terms["fbs"] = 1.0
        total, _ = composite_loss(terms)
        assert total == 3.0

    def test_nested_composition(self):
        terms = zero_terms()
        terms.update({"scale_reg": 1.0, "c_cls": 1.0, "f_cls": 1.0})
        total, breakdown = composite_loss(terms)
        assert total == pytest.approx(5.1, abs=1e-12)
        assert breakdown["rbfg"] == pytest.approx(0.51, abs=1e-12)

    def test_linearity_with_effective_weights(self, rng):
        w = LossWeights()
        terms = {name: float(rng.uniform(0, 2)) for name in LEAF_TERMS}
        total, _ = composite_loss(terms, w)
        expect = 0.0
        for name in TOP_LEVEL_TERMS:
            expect += getattr(w, name) * terms[name]
        for name in RBFG_TERMS:
            expect += w.rbfg * getattr(w, name) * terms[name]
        for name in BOX_TERMS:
            expect += w.box * getattr(w, name) * terms[name]
        assert total == pytest.approx(expect, rel=1e-12)

    def test_missing_term(self):
        terms = zero_terms()
        del terms["corner"]
        with pytest.raises(MissingTerm):
            composite_loss(terms)

    def test_non_finite_term(self):
        terms = zero_terms()
        terms["fbs"] = float("nan")
        with pytest.raises(NonFiniteTerm):
            composite_loss(terms)

    def test_breakdown_reports_every_weighted_term(self):
        _, breakdown = composite_loss(zero_terms())
        for name in LEAF_TERMS:
            assert f"weighted_{name}" in breakdown

    def test_weight_overrides(self):
        terms = zero_terms()
        terms["fbs"] = 1.0
        total, _ = composite_loss(terms, LossWeights(fbs=7.0))
        assert total == 7.0

    def test_negative_weight_rejected(self):
        with pytest.raises(InvalidParameter):
            LossWeights(fbs=-1.0)


def test_default_weights_match_reference_values():
    w = LossWeights()
    assert (w.vote_reg, w.fbs, w.rbfg) == (10.0, 3.0, 10.0)
    assert (w.obj_cls, w.box, w.sem_cls) == (5.0, 10.0, 1.0)
    assert (w.size_reg, w.corner, w.angle_cls, w.angle_reg) == (0.11, 0.33, 0.1, 0.11)
    assert (w.scale_reg, w.c_cls, w.f_cls) == (0.11, 0.2, 0.2)
