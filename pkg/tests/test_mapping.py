import numpy as np
import pytest

from curbmap.errors import InputValidationError
from curbmap.geometry import Pose
from curbmap.mapping import ROAD, SIDEWALK, ClassPolicy, RhdAccumulator, accumulate_rhd, tile_partition


def frame(xyz, classes):
    xyz = np.asarray(xyz, dtype=float)
    cloud = np.column_stack((xyz, np.zeros(len(xyz))))
    return cloud, np.asarray(classes), Pose.identity()


def test_policy_disjointness_enforced():
    with pytest.raises(InputValidationError):
        ClassPolicy(road_set=frozenset({40}), nonroad_set=frozenset({40, 48}))
    with pytest.raises(InputValidationError):
        ClassPolicy(dynamic_set=frozenset({40}))


def test_single_frame_one_tile():
    xyz = [[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]]
    submaps = accumulate_rhd([frame(xyz, [ROAD, SIDEWALK])], ClassPolicy(), tile_size=100.0)
    assert len(submaps) == 1
    assert len(submaps[0]) == 2


def test_all_dynamic_frame_gives_no_submaps():
    submaps = accumulate_rhd([frame([[1.0, 1.0, 0.0]], [10])], ClassPolicy())
    assert submaps == []


def test_duplicate_frames_deduplicated_by_voxel():
    rng = np.random.default_rng(0)
    xyz = rng.uniform(0, 10, (300, 3))
    classes = np.full(300, ROAD)
    f = frame(xyz, classes)
    submaps = accumulate_rhd([f, f], ClassPolicy(), voxel_size=0.05, tile_size=100.0)
    total = sum(len(s) for s in submaps)

    # Brute-force voxel-hash oracle over the single frame.
    keys = {tuple(k) for k in np.floor(xyz / 0.05).astype(int)}
    assert total == len(keys)


def test_no_dynamic_class_survives():
    rng = np.random.default_rng(1)
    xyz = rng.uniform(0, 50, (500, 3))
    classes = rng.choice([ROAD, SIDEWALK, 10, 30, 252], 500)
    submaps = accumulate_rhd([frame(xyz, classes)], ClassPolicy())
    policy = ClassPolicy()
    for submap in submaps:
        assert not policy.mask_of(submap.class_id, policy.dynamic_set).any()


def test_filtering_idempotent():
    rng = np.random.default_rng(2)
    xyz = rng.uniform(0, 40, (400, 3))
    classes = rng.choice([ROAD, SIDEWALK, 10], 400)
    first = accumulate_rhd([frame(xyz, classes)], ClassPolicy(), tile_size=50.0)
    merged_xyz = np.concatenate([s.xyz for s in first])
    merged_cls = np.concatenate([s.class_id for s in first])
    second = accumulate_rhd(
        [(np.column_stack((merged_xyz, np.zeros(len(merged_xyz)))), merged_cls, Pose.identity())],
        ClassPolicy(), tile_size=50.0,
    )
    assert sum(len(s) for s in second) == len(merged_xyz)


def test_tile_partition_single_tile():
    xyz = np.array([[1.0, 2.0, 0.0], [3.0, 4.0, 0.0]])
    tiles = tile_partition(xyz, np.array([ROAD, ROAD]), 50.0)
    assert len(tiles) == 1
    assert tiles[0].tile_index == (0, 0)


def test_tile_partition_boundary_goes_to_higher_tile():
    xyz = np.array([[50.0, 0.0, 0.0]])
    tiles = tile_partition(xyz, np.array([ROAD]), 50.0)
    assert tiles[0].tile_index == (1, 0)


def test_tile_partition_sum_oracle():
    rng = np.random.default_rng(3)
    xyz = np.column_stack((rng.uniform(0, 200, (10000, 2)), np.zeros(10000)))
    tiles = tile_partition(xyz, np.full(10000, ROAD), 50.0)
    assert len(tiles) == 16
    assert sum(len(t) for t in tiles) == 10000
    for tile in tiles:
        x_min, y_min, x_max, y_max = tile.bounds
        assert (tile.xyz[:, 0] >= x_min).all() and (tile.xyz[:, 0] < x_max).all()
        assert (tile.xyz[:, 1] >= y_min).all() and (tile.xyz[:, 1] < y_max).all()


def test_accumulator_transforms_to_global():
    pose = Pose(np.eye(3), np.array([100.0, 0.0, 0.0]))
    acc = RhdAccumulator(ClassPolicy())
    acc.add_frame(np.array([[1.0, 0.0, 0.0, 0.0]]), np.array([ROAD]), pose)
    xyz, _ = acc.points()
    assert np.allclose(xyz, [[101.0, 0.0, 0.0]])
