"""Pipeline configuration: defaults, JSON parsing, strict key checking."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import InvalidParameter, IoError, ParseError
from .losses import LossWeights

__all__ = ["PipelineConfig"]


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for the full grouping pipeline.

    The defaults reproduce the reference configuration: P=9 (66 rays),
    K_c=5, K_f=3, anchor radius 0.2 m with 8/4 query points, 256
    candidates, 0.3 m vote and positive radii, one foreground-biased
    stage (1024, 896, 128), and IoU thresholds {0.25, 0.5}.
    """

    P: int = 9
    azimuth_factor: int = 4
    K_c: int = 5
    K_f: int = 3
    anchor_radius: float = 0.2
    coarse_max_k: int = 8
    fine_max_k: int = 4
    M: int = 256
    candidate_mode: str = "vote_fps"
    vote_radius: float = 0.3
    positive_radius: float = 0.3
    fbs_schedule: tuple[tuple[int, int, int], ...] = ((1024, 896, 128),)
    nms_threshold: float = 0.25
    iou_thresholds: tuple[float, ...] = (0.25, 0.5)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    rng_seed: int = 0
    min_scale: float = 0.05
    scores_source: str = "oracle"
    scores_path: str | None = None
    votes_source: str = "oracle"
    votes_path: str | None = None

    def __post_init__(self):
        if self.P < 2:
            raise InvalidParameter(f"P must be >= 2, got {self.P}")
        for name in ("K_c", "K_f", "coarse_max_k", "fine_max_k", "M", "azimuth_factor"):
            if int(getattr(self, name)) < 1:
                raise InvalidParameter(f"{name} must be >= 1")
        for name in ("anchor_radius", "vote_radius", "positive_radius", "min_scale"):
            if not (float(getattr(self, name)) > 0.0):
                raise InvalidParameter(f"{name} must be > 0")
        if self.candidate_mode not in ("vote_fps", "seed_fps"):
            raise InvalidParameter(f"unknown candidate_mode {self.candidate_mode!r}")
        if not (0.0 <= self.nms_threshold <= 1.0):
            raise InvalidParameter("nms_threshold must be in [0, 1]")
        schedule = tuple(
            (int(k), int(a), int(b)) for k, a, b in self.fbs_schedule
        )
        for k, a, b in schedule:
            if k < 0 or a < 0 or b < 0 or a > k:
                raise InvalidParameter(f"bad fbs stage (kappa={k}, alpha={a}, beta={b})")
        object.__setattr__(self, "fbs_schedule", schedule)
        object.__setattr__(
            self, "iou_thresholds", tuple(float(t) for t in self.iou_thresholds)
        )
        for src, path_name in (
            (self.scores_source, "scores_path"),
            (self.votes_source, "votes_path"),
        ):
            if src not in ("oracle", "file"):
                raise InvalidParameter(f"source must be 'oracle' or 'file', got {src!r}")
            if src == "file" and getattr(self, path_name) is None:
                raise InvalidParameter(f"{path_name} required for file source")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParseError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "loss_weights" in kwargs:
            lw = kwargs["loss_weights"]
            if not isinstance(lw, dict):
                raise ParseError("loss_weights must be an object")
            known_w = {f.name for f in fields(LossWeights)}
            unknown_w = set(lw) - known_w
            if unknown_w:
                raise ParseError(f"unknown loss_weights keys: {sorted(unknown_w)}")
            kwargs["loss_weights"] = LossWeights(**lw)
        if "fbs_schedule" in kwargs:
            kwargs["fbs_schedule"] = tuple(tuple(s) for s in kwargs["fbs_schedule"])
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path) -> "PipelineConfig":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise IoError(f"cannot read config {path!r}: {e}") from e
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: invalid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ParseError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "loss_weights":
                v = {w.name: getattr(v, w.name) for w in fields(LossWeights)}
            elif f.name == "fbs_schedule":
                v = [list(s) for s in v]
            elif f.name == "iou_thresholds":
                v = list(v)
            out[f.name] = v
        return out
