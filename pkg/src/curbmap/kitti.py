"""Readers and writers for SemanticKITTI-layout sequences and our annotation outputs.

Input layout per sequence directory:

    velodyne/NNNNNN.bin   -- 16-byte records: 4 little-endian float32 (x, y, z, intensity)
    labels/NNNNNN.label   -- 4-byte records: uint32, low 16 bits class id, high 16 bits instance id
    poses.txt             -- one pose per line, 12 floats, row-major 3x4, camera frame
    calib.txt             -- contains a "Tr:" line (3x4 camera-from-lidar extrinsic)

Output polyline annotation format (one file per frame, little-endian):

    magic  b"CRBP"
    uint32 version (= 1)
    uint32 curb count
    per curb:
        uint32 instance id
        uint32 point count
        float32[3 * count] xyz (sensor frame)

Readers stream one frame at a time and raise structured errors instead of
crashing on malformed files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import CalibrationError, ConsistencyError, FormatError, InputValidationError
from .geometry import CurbPolyline, Pose

POINT_RECORD_BYTES = 16
LABEL_RECORD_BYTES = 4
ANNOTATION_MAGIC = b"CRBP"
ANNOTATION_VERSION = 1


@dataclass
class SequencePaths:
    velodyne_dir: Path
    labels_dir: Path
    poses_file: Path
    calib_file: Path
    frame_count: int

    @classmethod
    def from_dir(cls, seq_dir) -> "SequencePaths":
        seq_dir = Path(seq_dir)
        velodyne = seq_dir / "velodyne"
        labels = seq_dir / "labels"
        poses = seq_dir / "poses.txt"
        calib = seq_dir / "calib.txt"
        clouds = sorted(velodyne.glob("*.bin"))
        if not velodyne.is_dir() or not clouds:
            raise FormatError(velodyne, "no point-cloud files found")
        for cloud in clouds:
            if not (labels / f"{cloud.stem}.label").is_file():
                raise ConsistencyError(f"missing label file for frame {cloud.stem} in {labels}")
        n_poses = sum(1 for line in poses.read_text().splitlines() if line.strip())
        if n_poses < len(clouds):
            raise ConsistencyError(
                f"{poses}: {n_poses} poses for {len(clouds)} frames in {velodyne}"
            )
        return cls(velodyne, labels, poses, calib, len(clouds))

    def cloud_path(self, frame: int) -> Path:
        return self.velodyne_dir / f"{frame:06d}.bin"

    def label_path(self, frame: int) -> Path:
        return self.labels_dir / f"{frame:06d}.label"


@dataclass
class FrameAnnotation:
    """Final per-frame curb annotation in the sensor frame."""

    frame_index: int
    curbs: list[CurbPolyline] = field(default_factory=list)


def read_point_cloud(path) -> np.ndarray:
    """Read a .bin cloud into an (N, 4) float64 array of x, y, z, intensity."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % POINT_RECORD_BYTES != 0:
        offset = len(raw) - len(raw) % POINT_RECORD_BYTES
        raise FormatError(path, "file size not divisible by 16", offset=offset)
    pts = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    return pts.astype(np.float64)


def read_labels(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a .label file into (class_id, instance_id) uint16 arrays."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % LABEL_RECORD_BYTES != 0:
        offset = len(raw) - len(raw) % LABEL_RECORD_BYTES
        raise FormatError(path, "file size not divisible by 4", offset=offset)
    rec = np.frombuffer(raw, dtype="<u4")
    class_id = (rec & 0xFFFF).astype(np.uint16)
    instance_id = (rec >> 16).astype(np.uint16)
    return class_id, instance_id


def read_frame(paths: SequencePaths, frame: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read one frame's cloud and labels, checking that their counts agree."""
    cloud_path = paths.cloud_path(frame)
    label_path = paths.label_path(frame)
    cloud = read_point_cloud(cloud_path)
    class_id, instance_id = read_labels(label_path)
    if len(class_id) != len(cloud):
        raise ConsistencyError(
            f"{cloud_path} has {len(cloud)} points but {label_path} has {len(class_id)} labels"
        )
    return cloud, class_id, instance_id


def _read_tr(calib_file) -> np.ndarray:
    calib_file = Path(calib_file)
    for line in calib_file.read_text().splitlines():
        if line.startswith("Tr"):
            values = [float(v) for v in line.split(":", 1)[1].split()]
            if len(values) != 12:
                raise CalibrationError(f"{calib_file}: Tr line has {len(values)} values, expected 12")
            tr = np.eye(4)
            tr[:3, :4] = np.array(values).reshape(3, 4)
            return tr
    raise CalibrationError(f"{calib_file}: no Tr line found")


def _orthonormalize(rot: np.ndarray, context: str) -> np.ndarray:
    u, _, vt = np.linalg.svd(rot)
    fixed = u @ vt
    if np.linalg.det(fixed) < 0:
        u[:, -1] *= -1
        fixed = u @ vt
    if np.abs(fixed - rot).max() > 1e-3:
        raise InputValidationError(f"{context}: rotation far from orthonormal")
    return fixed


def read_poses(poses_file, calib_file) -> list[Pose]:
    """Read camera-frame poses and conjugate them into the LiDAR frame.

    pose_lidar = Tr^-1 @ P_cam @ Tr, so downstream code only ever sees
    LiDAR-frame poses.
    """
    tr = _read_tr(calib_file)
    tr_inv = np.linalg.inv(tr)
    poses = []
    for i, line in enumerate(Path(poses_file).read_text().splitlines()):
        if not line.strip():
            continue
        values = [float(v) for v in line.split()]
        if len(values) != 12:
            raise FormatError(poses_file, f"pose line {i} has {len(values)} values, expected 12")
        p_cam = np.eye(4)
        p_cam[:3, :4] = np.array(values).reshape(3, 4)
        mat = tr_inv @ p_cam @ tr
        rot = _orthonormalize(mat[:3, :3], f"{poses_file} line {i}")
        poses.append(Pose(rot, mat[:3, 3], frame_index=i))
    return poses


def write_polyline_annotation(annotation: FrameAnnotation, out_path) -> None:
    out_path = Path(out_path)
    parts = [ANNOTATION_MAGIC, struct.pack("<II", ANNOTATION_VERSION, len(annotation.curbs))]
    for curb in annotation.curbs:
        parts.append(struct.pack("<II", curb.instance_id, len(curb.points)))
        parts.append(curb.points.astype("<f4").tobytes())
    out_path.write_bytes(b"".join(parts))


def read_polyline_annotation(path, frame_index: int = 0) -> FrameAnnotation:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != ANNOTATION_MAGIC:
        raise FormatError(path, "bad magic", offset=0)
    version, count = struct.unpack_from("<II", raw, 4)
    if version != ANNOTATION_VERSION:
        raise FormatError(path, f"unsupported version {version}", offset=4)
    offset = 12
    curbs = []
    for _ in range(count):
        if offset + 8 > len(raw):
            raise FormatError(path, "truncated curb header", offset=offset)
        instance_id, n_points = struct.unpack_from("<II", raw, offset)
        offset += 8
        nbytes = 12 * n_points
        if offset + nbytes > len(raw):
            raise FormatError(path, "truncated point data", offset=offset)
        pts = np.frombuffer(raw, dtype="<f4", count=3 * n_points, offset=offset).reshape(-1, 3)
        offset += nbytes
        curbs.append(CurbPolyline(instance_id, pts.astype(np.float64)))
    return FrameAnnotation(frame_index, curbs)


def write_polyline_annotations(annotations, out_dir) -> None:
    """Write one annotation file per frame into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for annotation in annotations:
        write_polyline_annotation(annotation, out_dir / f"{annotation.frame_index:06d}.curb")


def write_pointwise_labels(class_id, instance_id, curb_mask, out_path, curb_class: int) -> None:
    """Write a .label file with curb_class substituted where curb_mask is true.

    Instance bits are copied through unchanged for every record.
    """
    class_id = np.asarray(class_id, dtype=np.uint32)
    instance_id = np.asarray(instance_id, dtype=np.uint32)
    mask = np.asarray(curb_mask, dtype=bool)
    if len(mask) != len(class_id) or len(instance_id) != len(class_id):
        raise ConsistencyError(
            f"mask/labels length mismatch: {len(mask)} vs {len(class_id)} for {out_path}"
        )
    out_class = np.where(mask, np.uint32(curb_class), class_id)
    records = ((instance_id << 16) | (out_class & 0xFFFF)).astype("<u4")
    Path(out_path).write_bytes(records.tobytes())


def write_metadata(out_path, entries: dict) -> None:
    """Human-readable sidecar: one 'key: value' line per entry."""
    lines = [f"{key}: {value}" for key, value in entries.items()]
    Path(out_path).write_text("\n".join(lines) + "\n")


def iter_sequence(paths: SequencePaths, poses: list[Pose],
                  start: int = 0, stop: int | None = None
                  ) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray, Pose]]:
    """Yield (cloud, class_id, instance_id, pose) per frame, streaming."""
    stop = paths.frame_count if stop is None else min(stop, paths.frame_count)
    for frame in range(start, stop):
        cloud, class_id, instance_id = read_frame(paths, frame)
        yield cloud, class_id, instance_id, poses[frame]
