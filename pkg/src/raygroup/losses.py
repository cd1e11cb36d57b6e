"""Closed-form loss terms and the weighted composite objective.

The composite total folds two sub-objectives before the top-level weighted
sum: the box term (size / corner / angle-cls / angle-reg) and the
ray-grouping term (scale-reg / coarse-cls / fine-cls).  The effective
coefficient of a leaf term is therefore its own weight times its parent's
weight; top-level terms use their weight directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidParameter, MissingTerm, NonFiniteTerm, ShapeMismatch

__all__ = [
    "LossWeights",
    "SCALE_REG_BETA",
    "SIZE_REG_BETA",
    "ANGLE_REG_BETA",
    "smooth_l1",
    "cross_entropy",
    "scale_loss",
    "corner_loss",
    "composite_loss",
]

#: Smooth-L1 transition points for the three regression terms.
SCALE_REG_BETA = 0.0625
SIZE_REG_BETA = 0.0625
ANGLE_REG_BETA = 0.04

_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Balancing factors of the composite objective (all >= 0)."""

    vote_reg: float = 10.0
    fbs: float = 3.0
    rbfg: float = 10.0
    obj_cls: float = 5.0
    box: float = 10.0
    sem_cls: float = 1.0
    size_reg: float = 0.11
    corner: float = 0.33
    angle_cls: float = 0.1
    angle_reg: float = 0.11
    scale_reg: float = 0.11
    c_cls: float = 0.2
    f_cls: float = 0.2

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not (v >= 0.0) or not math.isfinite(v):
                raise InvalidParameter(f"weight {f.name} must be >= 0, got {v}")
            object.__setattr__(self, f.name, v)


#: Top-level terms of the total, minus the two composed sub-objectives.
TOP_LEVEL_TERMS = ("vote_reg", "fbs", "obj_cls", "sem_cls")
BOX_TERMS = ("size_reg", "corner", "angle_cls", "angle_reg")
RBFG_TERMS = ("scale_reg", "c_cls", "f_cls")
LEAF_TERMS = TOP_LEVEL_TERMS + BOX_TERMS + RBFG_TERMS


def smooth_l1(pred, target, beta: float):
    """Smooth-L1: d^2 / (2 beta) for d < beta, else d - beta / 2.

    Accepts scalars or arrays (elementwise); continuous with continuous
    first derivative at d = beta.
    """
    if not (beta > 0.0):
        raise InvalidParameter(f"beta must be > 0, got {beta}")
    d = np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64))
    out = np.where(d < beta, d * d / (2.0 * beta), d - 0.5 * beta)
    return float(out) if out.ndim == 0 else out


def cross_entropy(probs, label: int) -> float:
    """-log p[label] for a probability distribution, floored at 1e-12."""
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    if np.any(p < 0.0) or not np.all(np.isfinite(p)):
        raise InvalidParameter("probs must be non-negative and finite")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise InvalidParameter(f"probs must sum to 1, got {float(p.sum())}")
    if not (0 <= label < len(p)):
        raise InvalidParameter(f"label {label} out of range for {len(p)} classes")
    return float(-np.log(max(float(p[label]), _PROB_FLOOR)))


def scale_loss(clusters, predictions, beta: float = SCALE_REG_BETA) -> float:
    """Mean smooth-L1 between predicted and target scales over positive
    clusters; 0 when there are no positives."""
    preds = np.asarray(predictions, dtype=np.float64).reshape(-1)
    clusters = list(clusters)
    if len(preds) != len(clusters):
        raise ShapeMismatch(
            f"{len(preds)} predictions for {len(clusters)} clusters"
        )
    values = [
        smooth_l1(preds[i], c.scale, beta)
        for i, c in enumerate(clusters)
        if c.positive
    ]
    return float(np.mean(values)) if values else 0.0


def corner_loss(pred_box, target_box, beta: float = 1.0) -> float:
    """Mean smooth-L1 of the 8 corner offsets between two boxes."""
    d = np.linalg.norm(pred_box.corners() - target_box.corners(), axis=1)
    return float(np.mean(smooth_l1(d, np.zeros_like(d), beta)))


def composite_loss(
    terms: dict, weights: LossWeights | None = None
) -> tuple[float, dict]:
    """Weighted total over the named leaf terms, plus a breakdown.

    ``terms`` must contain every leaf name (vote_reg, fbs, obj_cls,
    sem_cls, size_reg, corner, angle_cls, angle_reg, scale_reg, c_cls,
    f_cls).  The ray-grouping and box sub-objectives are composed first,
    then folded into the top-level sum with their own weights.
    """
    weights = weights or LossWeights()
    for name in LEAF_TERMS:
        if name not in terms:
            raise MissingTerm(f"loss term {name!r} missing")
        v = float(terms[name])
        if not math.isfinite(v):
            raise NonFiniteTerm(f"loss term {name!r} is {v}")

    breakdown = {name: float(terms[name]) for name in LEAF_TERMS}
    rbfg = sum(getattr(weights, n) * breakdown[n] for n in RBFG_TERMS)
    box = sum(getattr(weights, n) * breakdown[n] for n in BOX_TERMS)
    total = (
        sum(getattr(weights, n) * breakdown[n] for n in TOP_LEVEL_TERMS)
        + weights.rbfg * rbfg
        + weights.box * box
    )
    breakdown["rbfg"] = rbfg
    breakdown["box"] = box
    weighted = {f"weighted_{n}": getattr(weights, n) * breakdown[n] for n in TOP_LEVEL_TERMS}
    weighted.update(
        {f"weighted_{n}": weights.rbfg * getattr(weights, n) * breakdown[n] for n in RBFG_TERMS}
    )
    weighted.update(
        {f"weighted_{n}": weights.box * getattr(weights, n) * breakdown[n] for n in BOX_TERMS}
    )
    breakdown.update(weighted)
    breakdown["total"] = total
    return total, breakdown
