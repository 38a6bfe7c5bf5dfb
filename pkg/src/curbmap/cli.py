"""Command-line pipeline: composable subcommands over the library stages.

Exit codes: 0 success, 1 partial per-frame failures, 2 fatal error.

Intermediate artifacts so stages can be rerun independently:
  out/submaps/tile_I_J.npz   -- RHD sub-map tiles (build-map)
  out/tiles/tile_I_J.npz     -- per-tile grown polylines (grow)
  out/ci_map.txt             -- merged, resampled curb-instance map (merge)
  out/annotations/*.curb     -- per-frame polyline annotations (label)
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from . import bev, candidates, growing, kitti, mapping, metrics, pipeline, postprocess, synthetic
from .errors import CurbMapError

_TILE_RE = re.compile(r"tile_(-?\d+)_(-?\d+)\.npz")


def _load_config(args) -> pipeline.PipelineConfig:
    if args.config:
        config = pipeline.PipelineConfig.from_yaml(args.config)
    else:
        config = pipeline.PipelineConfig().with_env_overrides()
    if getattr(args, "sequence", None):
        config.sequence_dir = args.sequence
    if getattr(args, "out", None):
        config.output_dir = args.out
    if getattr(args, "workers", None):
        config.workers = args.workers
    return config


def _sequence_frames(config):
    paths = kitti.SequencePaths.from_dir(config.sequence_dir)
    poses = kitti.read_poses(paths.poses_file, paths.calib_file)
    return kitti.iter_sequence(paths, poses, config.start_frame, config.stop_frame)


def cmd_build_map(args) -> int:
    config = _load_config(args)
    policy = mapping.ClassPolicy()
    frames = ((cloud, cls, pose) for cloud, cls, _i, pose in _sequence_frames(config))
    submaps = mapping.accumulate_rhd(frames, policy, config.voxel_size, config.tile_size)
    out = Path(config.output_dir) / "submaps"
    out.mkdir(parents=True, exist_ok=True)
    for submap in submaps:
        ti, tj = submap.tile_index
        np.savez_compressed(
            out / f"tile_{ti}_{tj}.npz",
            bounds=np.array(submap.bounds),
            xyz=submap.xyz,
            class_id=np.asarray(submap.class_id, dtype=np.int64),
        )
    print(f"wrote {len(submaps)} sub-map tiles to {out}")
    return 0


def _load_tiles(tile_dir: Path):
    for path in sorted(tile_dir.glob("tile_*.npz")):
        match = _TILE_RE.fullmatch(path.name)
        if not match:
            continue
        yield (int(match.group(1)), int(match.group(2))), np.load(path)


def cmd_grow(args) -> int:
    config = _load_config(args)
    policy = mapping.ClassPolicy()
    submap_dir = Path(config.output_dir) / "submaps"
    out = Path(config.output_dir) / "tiles"
    out.mkdir(parents=True, exist_ok=True)
    n_tiles = 0
    for tile_index, data in _load_tiles(submap_dir):
        submap = mapping.SubMap(tile_index, tuple(data["bounds"]), data["xyz"], data["class_id"])
        cands = candidates.submap_candidates(
            submap, policy, config.cell_size, config.height_threshold
        )
        polylines = growing.cluster(
            cands, config.grow_params(), seed=pipeline._tile_seed(config.seed, tile_index)
        )
        np.savez_compressed(
            out / f"tile_{tile_index[0]}_{tile_index[1]}.npz",
            n_candidates=np.array(len(cands)),
            **{f"poly_{k:04d}": poly for k, poly in enumerate(polylines)},
        )
        n_tiles += 1
    print(f"grew curbs in {n_tiles} tiles into {out}")
    return 0


def cmd_merge(args) -> int:
    config = _load_config(args)
    tile_dir = Path(config.output_dir) / "tiles"
    per_tile = []
    for tile_index, data in _load_tiles(tile_dir):
        polylines = [data[key] for key in sorted(data.files) if key.startswith("poly_")]
        per_tile.append((tile_index, polylines))
    ci = postprocess.merge_tiles(per_tile, config.link_params())
    ci = postprocess.resample_ci_map(ci, config.resample_interval)
    ci.metadata = {"config_hash": config.config_hash(), "seed": str(config.seed)}
    out_path = Path(config.output_dir) / "ci_map.txt"
    pipeline.write_ci_map(ci, out_path)
    print(f"merged {len(ci.curbs)} curb instances into {out_path}")
    return 0


def cmd_label(args) -> int:
    config = _load_config(args)
    ci = pipeline.read_ci_map(args.ci_map or Path(config.output_dir) / "ci_map.txt")
    _annotations, failures = pipeline.run_stage2(config, ci)
    print(f"labeled frames written to {Path(config.output_dir) / 'annotations'}; "
          f"{len(failures)} failed")
    return 1 if failures else 0


def cmd_rasterize(args) -> int:
    config = _load_config(args)
    config.write_bev = True
    config.write_pointwise = args.pointwise
    ci = pipeline.read_ci_map(args.ci_map or Path(config.output_dir) / "ci_map.txt")
    _annotations, failures = pipeline.run_stage2(config, ci)
    print(f"rasters written to {Path(config.output_dir) / 'bev'}; {len(failures)} failed")
    return 1 if failures else 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    report = pipeline.run_eval(config, args.pred, args.gt)
    print(metrics.format_report(report))
    return 0


def cmd_stats(args) -> int:
    annotations = (
        kitti.read_polyline_annotation(path, frame_index=int(path.stem))
        for path in sorted(Path(args.annotations).glob("*.curb"))
    )
    stats = metrics.dataset_stats(annotations)
    print(f"frames: {stats.frames}")
    print(f"instances: {stats.instances}")
    print(f"points: {stats.points}")
    return 0


def cmd_all(args) -> int:
    config = _load_config(args)
    ci = pipeline.run_stage1(config)
    _annotations, failures = pipeline.run_stage2(config, ci)
    print(f"pipeline complete: {len(ci.curbs)} instances, "
          f"{len(failures)} failed frames, outputs in {config.output_dir}")
    return 1 if failures else 0


def cmd_gen_synthetic(args) -> int:
    gap = (args.gap_start, args.gap_start + args.gap) if args.gap > 0 else None
    scene = synthetic.straight_road_scene(
        length=args.length, road_width=args.road_width, curb_height=args.curb_height,
        n_frames=args.frames, gap=gap,
    )
    scene.write_kitti(args.out)
    print(f"synthetic sequence ({args.frames} frames) written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curbmap",
                                     description="Two-stage automatic curb labeling pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sequence=True):
        p.add_argument("--config", help="YAML configuration file")
        if sequence:
            p.add_argument("--sequence", help="sequence directory (velodyne/, labels/, ...)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="parallel worker count")

    common(sub.add_parser("build-map", help="accumulate the RHD map and tile it"))
    common(sub.add_parser("grow", help="extract candidates and grow curbs per tile"),
           sequence=False)
    common(sub.add_parser("merge", help="merge tiles into the curb-instance map"),
           sequence=False)

    p = sub.add_parser("label", help="stage 2: per-frame curb annotations")
    common(p)
    p.add_argument("--ci-map", help="curb-instance map file (default: <out>/ci_map.txt)")

    p = sub.add_parser("rasterize", help="BEV rasters and optional point-wise labels")
    common(p)
    p.add_argument("--ci-map", help="curb-instance map file")
    p.add_argument("--pointwise", action="store_true", help="also write point-wise labels")

    p = sub.add_parser("eval", help="compare two annotation directories")
    common(p, sequence=False)
    p.add_argument("pred", help="predicted annotation directory")
    p.add_argument("gt", help="ground-truth annotation directory")

    p = sub.add_parser("stats", help="dataset statistics over an annotation directory")
    p.add_argument("annotations", help="annotation directory")

    common(sub.add_parser("all", help="run stage 1 and stage 2 end to end"))

    p = sub.add_parser("gen-synthetic", help="emit a synthetic straight-road sequence")
    p.add_argument("out", help="sequence output directory")
    p.add_argument("--length", type=float, default=100.0)
    p.add_argument("--road-width", type=float, default=7.0)
    p.add_argument("--curb-height", type=float, default=0.15)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--gap", type=float, default=0.0, help="occlusion gap length, meters")
    p.add_argument("--gap-start", type=float, default=40.0)
    return parser


_COMMANDS = {
    "build-map": cmd_build_map,
    "grow": cmd_grow,
    "merge": cmd_merge,
    "label": cmd_label,
    "rasterize": cmd_rasterize,
    "eval": cmd_eval,
    "stats": cmd_stats,
    "all": cmd_all,
    "gen-synthetic": cmd_gen_synthetic,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CurbMapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
