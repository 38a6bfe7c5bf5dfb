"""Pipeline configuration and stage orchestration.

Stage 1 folds a sequence into RHD sub-maps, extracts and grows curb
candidates per tile (in parallel), and merges the tiles into a resampled
curb-instance map. Stage 2 projects that map back into every frame and
writes per-frame annotations, optional point-wise labels, and optional BEV
rasters. Every run emits a manifest with the config hash and counts.

Configuration files are YAML; angles are given in degrees and converted to
radians at load. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import bev, candidates, growing, kitti, labeling, mapping, metrics, postprocess
from .errors import CurbMapError, InputValidationError
from .geometry import CIMap, CurbPolyline

CI_MAP_MAGIC = "# curbmap curb-instance map v1"


@dataclass
class PipelineConfig:
    # map building
    voxel_size: float = 0.05
    tile_size: float = 50.0
    # candidate extraction
    cell_size: float = 0.2
    height_threshold: float = 0.3
    # growing
    r1: float = 2.6
    alpha1_deg: float = 30.0
    range2_factor: float = 3.0
    alpha2_deg: float = 10.0
    psi: int = 6
    # tile merging
    d_link: float = 0.5
    theta_link_deg: float = 20.0
    tail_window: int = 5
    resample_interval: float = 0.1
    # frame labeling
    r2: float = 80.0
    r3: float = 3.0
    r4: float = 5.0
    kappa: float = 0.2
    phi: float = 20.0
    # BEV / eval
    bev_resolution: float = 0.1
    bev_x_range: tuple[float, float] = (-19.2, 19.2)
    bev_y_range: tuple[float, float] = (-25.6, 25.6)
    dilation_kernel: int = 7
    tolerance_pixels: int = 1
    iou_thresholds: tuple[float, ...] = (0.5, 0.7)
    curb_class: int = 192
    # run control
    sequence_dir: str = ""
    output_dir: str = "out"
    seed: int = 0
    workers: int = 1
    start_frame: int = 0
    stop_frame: int | None = None
    write_pointwise: bool = False
    write_bev: bool = False

    @classmethod
    def from_yaml(cls, path) -> "PipelineConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise InputValidationError(f"unknown config keys: {sorted(unknown)}")
        config = cls(**data)
        return config.with_env_overrides()

    def with_env_overrides(self) -> "PipelineConfig":
        seq = os.environ.get("CURBMAP_SEQUENCE_DIR")
        out = os.environ.get("CURBMAP_OUTPUT_DIR")
        if seq:
            self.sequence_dir = seq
        if out:
            self.output_dir = out
        return self

    def to_yaml(self, path) -> None:
        data = asdict(self)
        data["bev_x_range"] = list(self.bev_x_range)
        data["bev_y_range"] = list(self.bev_y_range)
        data["iou_thresholds"] = list(self.iou_thresholds)
        Path(path).write_text(yaml.safe_dump(data, sort_keys=True))

    def config_hash(self) -> str:
        """Hash of the parameters that determine output content; run-control
        fields (paths, worker count, what to write) are excluded so reruns
        with different parallelism or directories hash identically."""
        data = asdict(self)
        for key in ("sequence_dir", "output_dir", "workers", "write_pointwise", "write_bev"):
            data.pop(key)
        blob = json.dumps(data, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()

    def grow_params(self) -> growing.GrowParams:
        return growing.GrowParams(
            r1=self.r1,
            alpha1=np.deg2rad(self.alpha1_deg),
            range2_factor=self.range2_factor,
            alpha2=np.deg2rad(self.alpha2_deg),
            psi=self.psi,
        )

    def link_params(self) -> postprocess.LinkParams:
        return postprocess.LinkParams(
            d_link=self.d_link,
            theta_link=np.deg2rad(self.theta_link_deg),
            tail_window=self.tail_window,
        )

    def fine_params(self) -> labeling.FineParams:
        return labeling.FineParams(
            r2=self.r2, r3=self.r3, r4=self.r4, kappa=self.kappa, phi=self.phi,
            resample_interval=self.resample_interval,
        )

    def bev_spec(self) -> bev.BevSpec:
        return bev.BevSpec(
            resolution=self.bev_resolution,
            x_range=tuple(self.bev_x_range),
            y_range=tuple(self.bev_y_range),
            dilation_kernel=self.dilation_kernel,
        )


def write_ci_map(ci: CIMap, path) -> None:
    """Documented text export: header, then one block per curb."""
    lines = [CI_MAP_MAGIC, f"curbs: {len(ci.curbs)}"]
    for key in sorted(ci.metadata):
        lines.append(f"meta {key}: {ci.metadata[key]}")
    for curb in ci.curbs:
        lines.append(f"curb {curb.instance_id} {len(curb.points)}")
        for x, y, z in curb.points:
            lines.append(f"{x:.9f} {y:.9f} {z:.9f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_ci_map(path) -> CIMap:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CI_MAP_MAGIC:
        raise InputValidationError(f"{path}: not a curb-instance map file")
    metadata = {}
    curbs = []
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("curbs:") or not line.strip():
            i += 1
        elif line.startswith("meta "):
            key, value = line[5:].split(":", 1)
            metadata[key.strip()] = value.strip()
            i += 1
        elif line.startswith("curb "):
            _, instance_id, count = line.split()
            count = int(count)
            pts = np.array(
                [[float(v) for v in lines[i + 1 + k].split()] for k in range(count)]
            )
            curbs.append(CurbPolyline(int(instance_id), pts))
            i += 1 + count
        else:
            raise InputValidationError(f"{path}: unexpected line {i}: {line!r}")
    return CIMap(curbs=curbs, metadata=metadata)


def _tile_seed(base_seed: int, tile_index: tuple[int, int]):
    return [base_seed, tile_index[0] + 2**20, tile_index[1] + 2**20]


def _parallel_map(fn, items, workers: int):
    """Map preserving item order; worker count never changes results."""
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _write_manifest(out_dir: Path, name: str, payload: dict) -> None:
    (out_dir / name).write_text(json.dumps(payload, indent=2, default=str) + "\n")


def run_stage1(config: PipelineConfig, frames=None,
               policy: mapping.ClassPolicy | None = None) -> CIMap:
    """Build the curb-instance map: accumulate, extract, grow, merge, resample."""
    t0 = time.time()
    policy = policy or mapping.ClassPolicy()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if frames is None:
        paths = kitti.SequencePaths.from_dir(config.sequence_dir)
        poses = kitti.read_poses(paths.poses_file, paths.calib_file)
        frames = (
            (cloud, cls, pose)
            for cloud, cls, _inst, pose in kitti.iter_sequence(
                paths, poses, config.start_frame, config.stop_frame
            )
        )
    else:
        frames = ((cloud, cls, pose) for cloud, cls, _inst, pose in frames)

    submaps = mapping.accumulate_rhd(frames, policy, config.voxel_size, config.tile_size)
    t_map = time.time()

    def tile_job(submap):
        cands = candidates.submap_candidates(
            submap, policy, config.cell_size, config.height_threshold
        )
        seed = _tile_seed(config.seed, submap.tile_index)
        polylines = growing.cluster(cands, config.grow_params(), seed=seed)
        return submap.tile_index, len(cands), polylines

    tile_results = _parallel_map(tile_job, submaps, config.workers)
    t_grow = time.time()

    per_tile = [(tile, polylines) for tile, _n, polylines in tile_results]
    ci = postprocess.merge_tiles(per_tile, config.link_params())
    ci = postprocess.resample_ci_map(ci, config.resample_interval)
    ci.metadata = {"config_hash": config.config_hash(), "seed": str(config.seed)}
    t_end = time.time()

    write_ci_map(ci, out_dir / "ci_map.txt")
    _write_manifest(out_dir, "stage1_manifest.json", {
        "stage": "stage1",
        "config_hash": config.config_hash(),
        "config": asdict(config),
        "tiles": len(submaps),
        "map_points": int(sum(len(s) for s in submaps)),
        "candidates": int(sum(n for _t, n, _p in tile_results)),
        "instances": len(ci.curbs),
        "timings_s": {
            "accumulate": t_map - t0,
            "extract_grow": t_grow - t_map,
            "merge_resample": t_end - t_grow,
        },
    })
    return ci


def run_stage2(config: PipelineConfig, ci: CIMap, frames=None,
               policy: mapping.ClassPolicy | None = None) -> tuple[list, list]:
    """Label every frame with the CI map; returns (annotations, failed frames)."""
    t0 = time.time()
    policy = policy or mapping.ClassPolicy()
    out_dir = Path(config.output_dir)
    ann_dir = out_dir / "annotations"
    ann_dir.mkdir(parents=True, exist_ok=True)
    if config.write_pointwise:
        (out_dir / "labels").mkdir(parents=True, exist_ok=True)
    if config.write_bev:
        (out_dir / "bev").mkdir(parents=True, exist_ok=True)

    if frames is None:
        paths = kitti.SequencePaths.from_dir(config.sequence_dir)
        poses = kitti.read_poses(paths.poses_file, paths.calib_file)
        frames = kitti.iter_sequence(paths, poses, config.start_frame, config.stop_frame)

    params = config.fine_params()
    spec = config.bev_spec()
    annotations = []
    failures = []
    for cloud, class_id, instance_id, pose in frames:
        try:
            annotation = labeling.label_frame(ci, pose, cloud, class_id, policy, params)
            kitti.write_polyline_annotation(
                annotation, ann_dir / f"{annotation.frame_index:06d}.curb"
            )
            if config.write_pointwise or config.write_bev:
                label_mask, instance_mask = bev.project_labels(annotation, spec)
                if config.write_pointwise:
                    mask = bev.curb_point_mask(cloud, class_id, label_mask, spec, policy)
                    kitti.write_pointwise_labels(
                        class_id, instance_id, mask,
                        out_dir / "labels" / f"{pose.frame_index:06d}.label",
                        config.curb_class,
                    )
                if config.write_bev:
                    raster = bev.encode_frame(cloud, spec)
                    raster.label_mask = label_mask
                    raster.instance_mask = instance_mask
                    bev.save_tensor(raster, out_dir / "bev" / f"{pose.frame_index:06d}.bev")
            annotations.append(annotation)
        except CurbMapError as exc:
            failures.append((pose.frame_index, str(exc)))

    stats = metrics.dataset_stats(annotations)
    kitti.write_metadata(out_dir / "stage2_stats.txt", {
        "frames": stats.frames,
        "instances": stats.instances,
        "points": stats.points,
        "failed_frames": len(failures),
    })
    _write_manifest(out_dir, "stage2_manifest.json", {
        "stage": "stage2",
        "config_hash": config.config_hash(),
        "config": asdict(config),
        "frames": stats.frames,
        "instances": stats.instances,
        "points": stats.points,
        "failures": failures,
        "timings_s": {"total": time.time() - t0},
    })
    return annotations, failures


def run_eval(config: PipelineConfig, pred_dir, gt_dir) -> metrics.EvalReport:
    """Compare two annotation directories via BEV masks at the configured
    tolerance; unmatched frames are excluded with a warning in the manifest."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    pred_files = {p.name: p for p in sorted(pred_dir.glob("*.curb"))}
    gt_files = {p.name: p for p in sorted(gt_dir.glob("*.curb"))}
    common = sorted(set(pred_files) & set(gt_files))
    unmatched = sorted(set(pred_files) ^ set(gt_files))

    spec = config.bev_spec()
    tp = fp = fn = 0
    gt_total = 0
    inst_counts = {t: [0, 0, 0] for t in config.iou_thresholds}
    for name in common:
        pred_annotation = kitti.read_polyline_annotation(pred_files[name])
        gt_annotation = kitti.read_polyline_annotation(gt_files[name])
        pred_mask, pred_instances = bev.project_labels(pred_annotation, spec)
        gt_mask, gt_instances = bev.project_labels(gt_annotation, spec)
        binary = metrics.binary_metrics(pred_mask, gt_mask, config.tolerance_pixels)
        tp, fp, fn = tp + binary.tp, fp + binary.fp, fn + binary.fn
        gt_total += int(gt_mask.sum())
        inst = metrics.instance_metrics(
            pred_instances, gt_instances, config.iou_thresholds, config.tolerance_pixels
        )
        for threshold, _p, _r, _f1_t, tp_t, fp_t, fn_t in inst.per_threshold:
            inst_counts[threshold][0] += tp_t
            inst_counts[threshold][1] += fp_t
            inst_counts[threshold][2] += fn_t

    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = (gt_total - fn) / gt_total if gt_total > 0 else 0.0
    per_threshold = []
    for threshold, (tp_t, fp_t, fn_t) in inst_counts.items():
        p_t = tp_t / (tp_t + fp_t) if tp_t + fp_t > 0 else 0.0
        r_t = tp_t / (tp_t + fn_t) if tp_t + fn_t > 0 else 0.0
        f1_t = 2 * p_t * r_t / (p_t + r_t) if p_t + r_t > 0 else 0.0
        per_threshold.append((threshold, p_t, r_t, f1_t))
    report = metrics.EvalReport(
        precision, recall,
        2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0,
        config.tolerance_pixels, tp, fp, fn, per_threshold=per_threshold,
    )

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval_report.txt").write_text(metrics.format_report(report) + "\n")
    _write_manifest(out_dir, "eval_manifest.json", {
        "stage": "eval",
        "config_hash": config.config_hash(),
        "frames_compared": len(common),
        "unmatched_frames": unmatched,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
    })
    return report
