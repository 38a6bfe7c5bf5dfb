"""Stage 2: project the global curb-instance map into each frame and refine it.

Per frame: clip the map to a radius around the sensor and move it into the
sensor frame (coarse extraction), score each curb point by the road and
curb-related points nearby (fine scoring), trim each curb to the index span
whose scores exceed the threshold (fine extraction), then spline-fit and
resample the survivors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .errors import InputValidationError
from .geometry import CIMap, CurbPolyline, Pose, inverse_transform_points
from .kitti import FrameAnnotation
from .mapping import ClassPolicy
from .postprocess import resample_polyline


@dataclass(frozen=True)
class FineParams:
    r2: float = 80.0  # coarse clipping radius, meters
    r3: float = 3.0  # road count radius
    r4: float = 5.0  # curb-related count radius
    kappa: float = 0.2  # curb-related weight
    phi: float = 20.0  # score threshold (strict >)
    resample_interval: float = 0.1

    def __post_init__(self):
        if min(self.r2, self.r3, self.r4, self.resample_interval) <= 0:
            raise InputValidationError("radii and resample_interval must be positive")
        if self.kappa < 0 or self.phi < 0:
            raise InputValidationError("kappa and phi must be non-negative")


def coarse_extract(ci: CIMap, pose: Pose, r2: float = 80.0) -> list[CurbPolyline]:
    """Clip each map curb to a 2D radius r2 around the pose and move the kept
    pieces into the sensor frame.

    A curb that leaves and re-enters the range yields one piece per
    contiguous index run; pieces shorter than 2 points are dropped. Pieces
    keep their map instance id.
    """
    center = pose.translation[:2]
    pieces: list[CurbPolyline] = []
    for curb in ci.curbs:
        inside = np.linalg.norm(curb.points[:, :2] - center, axis=1) <= r2
        if not inside.any():
            continue
        padded = np.concatenate(([False], inside, [False])).astype(np.int8)
        edges = np.diff(padded)
        starts = np.flatnonzero(edges == 1)
        stops = np.flatnonzero(edges == -1)
        for a, b in zip(starts, stops):
            if b - a < 2:
                continue
            local = inverse_transform_points(curb.points[a:b], pose)
            pieces.append(CurbPolyline(curb.instance_id, local))
    return pieces


class FrameSemantics:
    """2D spatial indices over one frame's road and curb-related points."""

    def __init__(self, cloud: np.ndarray, class_id: np.ndarray, policy: ClassPolicy):
        cloud = np.asarray(cloud, dtype=np.float64)
        road = policy.mask_of(class_id, policy.road_set)
        side = policy.mask_of(class_id, policy.curbside_set)
        self.road_tree = cKDTree(cloud[road, :2]) if road.any() else None
        self.side_tree = cKDTree(cloud[side, :2]) if side.any() else None


def fine_scores(points: np.ndarray, semantics: FrameSemantics,
                params: FineParams = FineParams()) -> np.ndarray:
    """Score every point: nearby road count + kappa * nearby curb-related count."""
    pts = np.asarray(points, dtype=np.float64)[:, :2]
    scores = np.zeros(len(pts))
    if semantics.road_tree is not None:
        scores += np.array(
            [len(hit) for hit in semantics.road_tree.query_ball_point(pts, params.r3)],
            dtype=np.float64,
        )
    if semantics.side_tree is not None:
        scores += params.kappa * np.array(
            [len(hit) for hit in semantics.side_tree.query_ball_point(pts, params.r4)],
            dtype=np.float64,
        )
    return scores


def fine_score(point, semantics: FrameSemantics, params: FineParams = FineParams()) -> float:
    return float(fine_scores(np.asarray(point, dtype=np.float64).reshape(1, 3), semantics, params)[0])


def trim_to_qualifying_span(scores: np.ndarray, phi: float) -> tuple[int, int] | None:
    """Inclusive (start, stop) index span between the first and last score > phi,
    or None when no score qualifies. Interior sub-threshold points stay in,
    keeping the annotation continuous."""
    qualifying = np.flatnonzero(np.asarray(scores) > phi)
    if len(qualifying) == 0:
        return None
    return int(qualifying[0]), int(qualifying[-1])


def fine_extract(curb: CurbPolyline, semantics: FrameSemantics,
                 params: FineParams = FineParams()) -> CurbPolyline | None:
    """Trim a coarse-extracted curb to its qualifying index span."""
    span = trim_to_qualifying_span(fine_scores(curb.points, semantics, params), params.phi)
    if span is None:
        return None
    a, b = span
    if b - a < 1:
        return None
    return CurbPolyline(curb.instance_id, curb.points[a : b + 1], curb.source_tile)


def spline_resample(curb: CurbPolyline, interval: float = 0.1) -> CurbPolyline:
    """Fit a centripetal cubic spline through the points and sample it at
    equal 2D arc-length intervals. Falls back to linear resampling below 4
    points."""
    if interval <= 0:
        raise InputValidationError("interval must be positive")
    pts = curb.points
    if len(pts) < 4:
        return resample_polyline(curb, interval)
    chord = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    t = np.concatenate(([0.0], np.cumsum(np.sqrt(chord))))
    spline = CubicSpline(t, pts, axis=0)
    # Dense evaluation to build an arc-length table, then invert it.
    dense_t = np.interp(
        np.linspace(0, 1, 16 * len(pts)), np.linspace(0, 1, len(t)), t
    )
    dense = spline(dense_t)
    arc = np.concatenate(([0.0], np.cumsum(np.linalg.norm(np.diff(dense[:, :2], axis=0), axis=1))))
    total = arc[-1]
    if total == 0:
        return curb
    stations = np.arange(0.0, total, interval)
    if total - stations[-1] > 1e-9:
        stations = np.concatenate((stations, [total]))
    sample_t = np.interp(stations, arc, dense_t)
    out = spline(sample_t)
    out[0] = pts[0]
    out[-1] = pts[-1]
    keep = np.ones(len(out), dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(out, axis=0), axis=1) > 0
    out = out[keep]
    if len(out) < 2:
        return curb
    return CurbPolyline(curb.instance_id, out, curb.source_tile)


def label_frame(ci: CIMap, pose: Pose, cloud: np.ndarray, class_id: np.ndarray,
                policy: ClassPolicy, params: FineParams = FineParams()) -> FrameAnnotation:
    """Run coarse extraction, fine extraction, and spline resampling for one frame."""
    semantics = FrameSemantics(cloud, class_id, policy)
    curbs = []
    for piece in coarse_extract(ci, pose, params.r2):
        fine = fine_extract(piece, semantics, params)
        if fine is not None:
            curbs.append(spline_resample(fine, params.resample_interval))
    return FrameAnnotation(pose.frame_index, curbs)


def label_sequence(frames, ci: CIMap, policy: ClassPolicy,
                   params: FineParams = FineParams()):
    """Yield a FrameAnnotation per (cloud, class_id, instance_id, pose) frame."""
    for cloud, class_id, _instance_id, pose in frames:
        yield label_frame(ci, pose, cloud, class_id, policy, params)
