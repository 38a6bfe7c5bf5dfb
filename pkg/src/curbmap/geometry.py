"""Core geometric types: rigid poses, curb polylines, and the global curb-instance map.

All coordinates are stored as float64. Angles are radians everywhere inside
the library; configuration loaders convert from degrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputValidationError

_ORTHO_TOL = 1e-6


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(1, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InputValidationError(f"expected (N, 3) points, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InputValidationError("points contain NaN or Inf")
    return pts


@dataclass(frozen=True)
class Pose:
    """Rigid SE3 transform mapping sensor-frame points into the global frame."""

    rotation: np.ndarray
    translation: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise InputValidationError("pose contains NaN or Inf")
        if np.abs(R.T @ R - np.eye(3)).max() > _ORTHO_TOL:
            raise InputValidationError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise InputValidationError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, frame_index: int = 0) -> "Pose":
        return cls(np.eye(3), np.zeros(3), frame_index)

    @classmethod
    def from_matrix(cls, mat: np.ndarray, frame_index: int = 0) -> "Pose":
        mat = np.asarray(mat, dtype=np.float64)
        return cls(mat[:3, :3], mat[:3, 3], frame_index)

    def as_matrix(self) -> np.ndarray:
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat

    def compose(self, other: "Pose") -> "Pose":
        """Return self @ other (apply other first, then self)."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            self.frame_index,
        )

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -(self.rotation.T @ self.translation), self.frame_index)


def transform_points(points, pose: Pose) -> np.ndarray:
    """Map points into the global frame: p' = R p + t."""
    pts = _as_points(points)
    return pts @ pose.rotation.T + pose.translation


def inverse_transform_points(points, pose: Pose) -> np.ndarray:
    """Map global-frame points back into the sensor frame: p' = R^T (p - t)."""
    pts = _as_points(points)
    return (pts - pose.translation) @ pose.rotation


@dataclass
class CurbPolyline:
    """One ordered curb instance; points are (N, 3) float64."""

    instance_id: int
    points: np.ndarray
    source_tile: Optional[tuple] = None

    def __post_init__(self):
        pts = _as_points(self.points)
        if len(pts) < 2:
            raise InputValidationError("a curb polyline needs at least 2 points")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg == 0.0):
            raise InputValidationError("consecutive polyline points must be distinct")
        self.points = pts

    def arc_length_2d(self) -> float:
        return float(np.linalg.norm(np.diff(self.points[:, :2], axis=0), axis=1).sum())

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class CIMap:
    """Global curb-instance map: uniquely numbered polylines plus run metadata."""

    curbs: list[CurbPolyline] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [c.instance_id for c in self.curbs]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise InputValidationError("instance ids must be 1..N without gaps")

    def __len__(self) -> int:
        return len(self.curbs)
