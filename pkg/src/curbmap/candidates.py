"""Grid-based curb candidate extraction from an RHD sub-map.

Each sub-map is projected into a 2D grid. A cell containing both road and
non-road points whose mean heights differ by at most the height threshold is
a curb cell; the points of curb cells are the curb candidate points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputValidationError
from .mapping import ClassPolicy, SubMap

UNKNOWN = 0
ROAD_CELL = 1
NONROAD_CELL = 2
CURB_CELL = 3

CATEGORY_NAMES = {UNKNOWN: "unknown", ROAD_CELL: "road", NONROAD_CELL: "nonroad", CURB_CELL: "curb"}


@dataclass
class GridMap:
    """Per-cell road/non-road statistics over a sub-map footprint.

    point_cell holds the flat cell index of every sub-map point that belongs
    to the road or non-road class (-1 for ignored points), so candidate
    extraction can map cells back to points.
    """

    origin: np.ndarray  # (2,) meters
    cell_size: float
    shape: tuple[int, int]  # (nx, ny)
    road_count: np.ndarray
    nonroad_count: np.ndarray
    road_height_mean: np.ndarray
    nonroad_height_mean: np.ndarray
    category: np.ndarray
    point_cell: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.shape[0] * self.shape[1]


def rasterize(submap: SubMap, policy: ClassPolicy, cell_size: float = 0.2) -> GridMap:
    """Bin road/non-road points of a sub-map into a 2D grid.

    The grid origin is the tile's lower bounds corner, so cell edges line up
    across tiles that share a tile grid.
    """
    if cell_size <= 0:
        raise InputValidationError("cell_size must be positive")
    origin = np.array(submap.bounds[:2], dtype=np.float64)
    extent = np.array(submap.bounds[2:], dtype=np.float64) - origin
    nx = max(1, int(np.ceil(extent[0] / cell_size - 1e-9)))
    ny = max(1, int(np.ceil(extent[1] / cell_size - 1e-9)))
    n_cells = nx * ny

    road_mask = policy.mask_of(submap.class_id, policy.road_set)
    nonroad_mask = policy.mask_of(submap.class_id, policy.nonroad_set)
    considered = road_mask | nonroad_mask

    point_cell = np.full(len(submap.xyz), -1, dtype=np.int64)
    if considered.any():
        ij = np.floor((submap.xyz[considered, :2] - origin) / cell_size).astype(np.int64)
        ij[:, 0] = np.clip(ij[:, 0], 0, nx - 1)
        ij[:, 1] = np.clip(ij[:, 1], 0, ny - 1)
        point_cell[considered] = ij[:, 0] * ny + ij[:, 1]

    road_count = np.zeros(n_cells, dtype=np.int64)
    nonroad_count = np.zeros(n_cells, dtype=np.int64)
    road_hsum = np.zeros(n_cells)
    nonroad_hsum = np.zeros(n_cells)
    z = submap.xyz[:, 2]
    np.add.at(road_count, point_cell[road_mask], 1)
    np.add.at(road_hsum, point_cell[road_mask], z[road_mask])
    np.add.at(nonroad_count, point_cell[nonroad_mask], 1)
    np.add.at(nonroad_hsum, point_cell[nonroad_mask], z[nonroad_mask])

    with np.errstate(invalid="ignore", divide="ignore"):
        road_mean = np.where(road_count > 0, road_hsum / np.maximum(road_count, 1), np.nan)
        nonroad_mean = np.where(
            nonroad_count > 0, nonroad_hsum / np.maximum(nonroad_count, 1), np.nan
        )

    return GridMap(
        origin=origin,
        cell_size=cell_size,
        shape=(nx, ny),
        road_count=road_count,
        nonroad_count=nonroad_count,
        road_height_mean=road_mean,
        nonroad_height_mean=nonroad_mean,
        category=np.full(n_cells, UNKNOWN, dtype=np.int8),
        point_cell=point_cell,
    )


def classify_cells(grid: GridMap, height_threshold: float = 0.3) -> GridMap:
    """Assign road / non-road / curb / unknown to every cell (in place).

    Curb requires both classes present and mean heights within the threshold.
    A mixed cell failing the height test belongs to the class sitting lower,
    so overhanging vegetation above a road leaves a road cell.
    """
    both = (grid.road_count > 0) & (grid.nonroad_count > 0)
    diff = np.abs(grid.road_height_mean - grid.nonroad_height_mean)
    curb = both & (diff <= height_threshold)
    road_lower = grid.road_height_mean <= grid.nonroad_height_mean

    category = np.full(grid.n_cells, UNKNOWN, dtype=np.int8)
    category[(grid.road_count > 0) & (grid.nonroad_count == 0)] = ROAD_CELL
    category[(grid.road_count == 0) & (grid.nonroad_count > 0)] = NONROAD_CELL
    category[both & ~curb & road_lower] = ROAD_CELL
    category[both & ~curb & ~road_lower] = NONROAD_CELL
    category[curb] = CURB_CELL
    grid.category = category
    return grid


def extract_candidates(grid: GridMap, submap: SubMap) -> np.ndarray:
    """Return all points (road and non-road alike) of curb cells, global frame."""
    if len(submap.xyz) == 0:
        return np.empty((0, 3))
    in_curb_cell = (grid.point_cell >= 0) & (grid.category[grid.point_cell] == CURB_CELL)
    return submap.xyz[in_curb_cell]


def submap_candidates(submap: SubMap, policy: ClassPolicy, cell_size: float = 0.2,
                      height_threshold: float = 0.3) -> np.ndarray:
    """rasterize + classify + extract in one call."""
    grid = classify_cells(rasterize(submap, policy, cell_size), height_threshold)
    return extract_candidates(grid, submap)


def grid_image(grid: GridMap) -> np.ndarray:
    """Color-coded (ny, nx, 3) uint8 debug image: blue road, green non-road,
    yellow curb, black unknown."""
    palette = np.array(
        [[0, 0, 0], [0, 0, 255], [0, 200, 0], [255, 220, 0]], dtype=np.uint8
    )
    cells = grid.category.reshape(grid.shape)
    return palette[cells.T[::-1]]
