"""Accumulate posed semantic frames into a road HD map and tile it into sub-maps.

Dynamic road-user points are dropped, the rest are transformed into the
global frame, deduplicated on a voxel grid, and partitioned into square
tiles for parallel downstream processing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, InputValidationError
from .geometry import Pose, transform_points

# SemanticKITTI class codes used for the defaults.
ROAD = 40
PARKING = 44
SIDEWALK = 48
OTHER_GROUND = 49
VEGETATION = 70
TERRAIN = 72

DEFAULT_DYNAMIC = frozenset(
    {10, 11, 13, 15, 16, 18, 20, 30, 31, 32, 252, 253, 254, 255, 256, 257, 258, 259}
)


@dataclass(frozen=True)
class ClassPolicy:
    """Which semantic classes count as road, non-road, curb-related, and dynamic."""

    road_set: frozenset = frozenset({ROAD})
    nonroad_set: frozenset = frozenset({SIDEWALK, OTHER_GROUND, VEGETATION, TERRAIN})
    curbside_set: frozenset = frozenset({SIDEWALK, VEGETATION})
    dynamic_set: frozenset = DEFAULT_DYNAMIC

    def __post_init__(self):
        if self.road_set & self.nonroad_set:
            raise InputValidationError("road_set and nonroad_set must be disjoint")
        others = self.road_set | self.nonroad_set | self.curbside_set
        if self.dynamic_set & others:
            raise InputValidationError("dynamic_set must be disjoint from the static sets")

    def mask_of(self, class_id: np.ndarray, class_set) -> np.ndarray:
        return np.isin(class_id, np.fromiter(class_set, dtype=np.int64))


@dataclass
class SubMap:
    """One square tile of the RHD map, points in the global frame."""

    tile_index: tuple[int, int]
    bounds: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    xyz: np.ndarray  # (N, 3) float64
    class_id: np.ndarray  # (N,)

    def __post_init__(self):
        x_min, y_min, x_max, y_max = self.bounds
        x, y = self.xyz[:, 0], self.xyz[:, 1]
        if len(self.xyz) and not (
            (x >= x_min).all() and (x < x_max).all() and (y >= y_min).all() and (y < y_max).all()
        ):
            raise InputValidationError(f"tile {self.tile_index}: points outside bounds")

    def __len__(self) -> int:
        return len(self.xyz)


def tile_partition(xyz: np.ndarray, class_id: np.ndarray, tile_size: float) -> list[SubMap]:
    """Partition global points into square tiles, tile_index = floor((x, y) / tile_size).

    A point exactly on a boundary goes to the higher tile (floor convention).
    Tiles are returned sorted by index for deterministic downstream order.
    """
    if tile_size <= 0:
        raise InputValidationError("tile_size must be positive")
    xyz = np.asarray(xyz, dtype=np.float64)
    class_id = np.asarray(class_id)
    if len(xyz) == 0:
        return []
    tiles_ij = np.floor(xyz[:, :2] / tile_size).astype(np.int64)
    order = np.lexsort((tiles_ij[:, 1], tiles_ij[:, 0]))
    tiles_ij = tiles_ij[order]
    xyz = xyz[order]
    class_id = class_id[order]
    change = np.any(np.diff(tiles_ij, axis=0) != 0, axis=1)
    starts = np.concatenate(([0], np.flatnonzero(change) + 1, [len(xyz)]))
    submaps = []
    for a, b in zip(starts[:-1], starts[1:]):
        ti, tj = int(tiles_ij[a, 0]), int(tiles_ij[a, 1])
        bounds = (ti * tile_size, tj * tile_size, (ti + 1) * tile_size, (tj + 1) * tile_size)
        submaps.append(SubMap((ti, tj), bounds, xyz[a:b], class_id[a:b]))
    return submaps


class RhdAccumulator:
    """Streaming fold of posed semantic frames into a deduplicated global RHD map.

    Voxel dedup keeps the first point seen per (voxel, class); merging two
    accumulators would be associative, but the common path is a sequential
    fold over frames.
    """

    def __init__(self, policy: ClassPolicy, voxel_size: float = 0.05):
        if voxel_size <= 0:
            raise InputValidationError("voxel_size must be positive")
        self.policy = policy
        self.voxel_size = voxel_size
        self._seen: set[bytes] = set()
        self._xyz: list[np.ndarray] = []
        self._class: list[np.ndarray] = []

    def add_frame(self, cloud: np.ndarray, class_id: np.ndarray, pose: Pose) -> None:
        cloud = np.asarray(cloud, dtype=np.float64)
        class_id = np.asarray(class_id)
        if len(class_id) != len(cloud):
            raise ConsistencyError(
                f"frame {pose.frame_index}: {len(cloud)} points vs {len(class_id)} labels"
            )
        keep = ~self.policy.mask_of(class_id, self.policy.dynamic_set)
        if not keep.any():
            return
        pts = transform_points(cloud[keep, :3], pose)
        cls = class_id[keep]
        keys = np.empty((len(pts), 4), dtype=np.int64)
        keys[:, :3] = np.floor(pts / self.voxel_size)
        keys[:, 3] = cls
        # Collapse intra-frame duplicates first (keep first occurrence),
        # then check the survivors against the global set.
        view = keys.view([("", np.int64)] * 4).ravel()
        _, first = np.unique(view, return_index=True)
        first.sort()
        seen = self._seen
        fresh = [i for i in first if view[i].tobytes() not in seen]
        seen.update(view[i].tobytes() for i in fresh)
        if fresh:
            self._xyz.append(pts[fresh])
            self._class.append(cls[fresh])

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._xyz:
            return np.empty((0, 3)), np.empty((0,), dtype=np.int64)
        return np.concatenate(self._xyz), np.concatenate(self._class)

    def finish(self, tile_size: float = 50.0) -> list[SubMap]:
        xyz, class_id = self.points()
        return tile_partition(xyz, class_id, tile_size)


def accumulate_rhd(frames, policy: ClassPolicy, voxel_size: float = 0.05,
                   tile_size: float = 50.0) -> list[SubMap]:
    """Fold (cloud, class_id, pose) frames into RHD sub-maps.

    Dynamic classes are dropped, survivors go to the global frame, duplicates
    collapse on a voxel grid, and the result is tiled.
    """
    acc = RhdAccumulator(policy, voxel_size)
    for cloud, class_id, pose in frames:
        acc.add_frame(cloud, class_id, pose)
    return acc.finish(tile_size)
