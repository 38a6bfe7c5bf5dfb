"""Two-stage automatic curb labeling for LiDAR sequences.

Stage 1 builds a global curb-instance map from posed semantic point clouds;
Stage 2 projects it back into every frame and refines per-frame annotations.
BEV rasterization and tolerance-based evaluation metrics round out the
dataset tooling.
"""

from .geometry import CIMap, CurbPolyline, Pose, inverse_transform_points, transform_points
from .mapping import ClassPolicy, SubMap, accumulate_rhd, tile_partition
from .candidates import classify_cells, extract_candidates, rasterize, submap_candidates
from .growing import GrowParams, cluster
from .postprocess import LinkParams, merge_tiles, resample_ci_map, resample_polyline
from .labeling import (
    FineParams,
    FrameSemantics,
    coarse_extract,
    fine_extract,
    fine_score,
    label_frame,
    label_sequence,
    spline_resample,
)
from .bev import BevSpec, encode_frame, project_labels, relabel_points
from .metrics import binary_metrics, dataset_stats, instance_metrics
from .pipeline import PipelineConfig, read_ci_map, run_eval, run_stage1, run_stage2, write_ci_map

__version__ = "0.1.0"

__all__ = [
    "CIMap", "CurbPolyline", "Pose", "transform_points", "inverse_transform_points",
    "ClassPolicy", "SubMap", "accumulate_rhd", "tile_partition",
    "rasterize", "classify_cells", "extract_candidates", "submap_candidates",
    "GrowParams", "cluster",
    "LinkParams", "merge_tiles", "resample_polyline", "resample_ci_map",
    "FineParams", "FrameSemantics", "coarse_extract", "fine_score", "fine_extract",
    "spline_resample", "label_frame", "label_sequence",
    "BevSpec", "encode_frame", "project_labels", "relabel_points",
    "binary_metrics", "instance_metrics", "dataset_stats",
    "PipelineConfig", "run_stage1", "run_stage2", "run_eval",
    "read_ci_map", "write_ci_map",
]
