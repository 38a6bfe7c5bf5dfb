#!/usr/bin/env python3
"""Stage 1 walkthrough: from posed frames to a curb-instance map.

Generates a synthetic straight road with an occlusion gap in one curb, then
runs each stage-1 step explicitly — semantic accumulation into tiles,
per-cell curb candidate extraction, dual-range growing, tile merging, and
resampling — printing what happens at every step.

Run:  python3 demos/demo_stage1_mapping.py
"""

import numpy as np

from curbmap.candidates import submap_candidates
from curbmap.growing import GrowParams, cluster
from curbmap.mapping import ClassPolicy, accumulate_rhd
from curbmap.pipeline import _tile_seed
from curbmap.postprocess import merge_tiles, resample_ci_map
from curbmap.synthetic import straight_road_scene


def main():
    print("== Stage 1: building a curb-instance map ==\n")

    # A 100 m road, two curbs at y = +-3.5, with a 5 m hole in the upper
    # curb's observations (as a parked car would cause).
    scene = straight_road_scene(length=100.0, n_frames=20, gap=(40.0, 45.0))
    print(f"synthetic scene: {len(scene.xyz)} points, {len(scene.poses)} frames, "
          f"curbs at y = {scene.curb_lines_y}")

    # 1. Accumulate semantic points into a global map, split into tiles.
    policy = ClassPolicy()
    frames = ((cloud, cls, pose) for cloud, cls, _inst, pose in scene.frames())
    submaps = accumulate_rhd(frames, policy, voxel_size=0.05, tile_size=50.0)
    print(f"\n1. accumulated {sum(len(s) for s in submaps)} deduplicated points "
          f"into {len(submaps)} tiles: {[s.tile_index for s in submaps]}")

    # 2+3. Per tile: extract curb candidate points (grid cells containing
    # both road and raised non-road points at a small height step), then
    # grow them into ordered instances.
    params = GrowParams()
    per_tile = []
    for submap in submaps:
        cands = submap_candidates(submap, policy)
        polylines = cluster(cands, params, seed=_tile_seed(0, submap.tile_index))
        per_tile.append((submap.tile_index, polylines))
        print(f"2. tile {submap.tile_index}: {len(cands)} candidates "
              f"-> {len(polylines)} grown instance(s)")

    # 4. Merge tiles: relink curbs cut at tile borders, renumber, resample.
    ci = merge_tiles(per_tile)
    ci = resample_ci_map(ci, interval=0.1)
    print(f"\n3. merged map: {len(ci.curbs)} curb instances")
    for curb in ci.curbs:
        y_mean = curb.points[:, 1].mean()
        print(f"   instance {curb.instance_id}: {len(curb.points)} points, "
              f"length {curb.arc_length_2d():.1f} m, mean y {y_mean:+.2f} m")

    gap_bridged = len(ci.curbs) == 2
    print(f"\nthe 5 m occlusion gap was {'bridged' if gap_bridged else 'NOT bridged'} "
          f"by the long-range growing step (limit: {params.r2:.1f} m)")


if __name__ == "__main__":
    main()
