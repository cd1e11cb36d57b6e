"""raygroup: deterministic point-cloud geometry for ray-based grouping.

Everything is float64, pure, and reproducible: spherical ray bundles,
coarse-to-fine anchor sampling, farthest-point and foreground-biased
point selection, grid-accelerated ball queries, detection losses, and
the 3D IoU / NMS / mAP evaluation stack, all validated against
brute-force oracles on synthetic scenes.
"""

from .config import PipelineConfig
from .errors import (
    EmptyEvaluation,
    GenerationFailure,
    InvalidParameter,
    IoError,
    MissingTerm,
    NonFiniteTerm,
    ParseError,
    RaygroupError,
    ShapeMismatch,
    ValidationError,
)
from .grid import (
    GridIndex,
    ball_query,
    ball_query_batch,
    build_grid,
    interpolate_features,
)
from .grouping import (
    RayFeatureBlock,
    VoteCluster,
    anchor_mask_labels,
    assign_positive_clusters,
    group_votes,
    mask_features,
    ordered_concat,
    pool_anchor_features,
    sample_candidates,
    toy_featurizer,
)
from .losses import (
    LossWeights,
    composite_loss,
    corner_loss,
    cross_entropy,
    scale_loss,
    smooth_l1,
)
from .metrics import (
    PRCurve,
    average_precision,
    foreground_recall,
    iou3d,
    mean_average_precision,
    nms3d,
    surface_point_recall,
)
from .pipeline import run_eval, run_pipeline
from .rays import (
    Ray,
    RayBundle,
    clamp_scale,
    emit_rays,
    ray_count,
    ray_directions,
    scale_target,
)
from .sampling import (
    AnchorPoint,
    AnchorSet,
    ScoredSampleSet,
    SampleSource,
    coarse_anchors,
    farthest_point_sampling,
    fine_anchors,
    foreground_biased_sampling,
    foreground_split,
    inverse_transform_times,
)
from .scene import (
    Box3D,
    Detection,
    PointCloud,
    SceneAnnotation,
    export_ply,
    load_boxes,
    load_detections,
    load_scene,
    save_boxes,
    save_detections,
    save_scene,
)
from .synth import (
    SceneSpec,
    generate_scene,
    oracle_ball_query,
    oracle_fps,
    oracle_iou_mc,
    oracle_votes,
)

__version__ = "0.1.0"
