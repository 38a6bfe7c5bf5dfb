"""Parametric synthetic scenes for end-to-end checks and demos.

The straight-road scene is a 100 m road of configurable width with two curbs
(road surface at z = 0, sidewalk raised by the curb height). Points near each
curb line form a dense band so that grid cells straddling the line contain
both classes; the rest of the road and sidewalks get a sparser fill. An
optional gap removes the band points along a span of one curb to emulate
occlusion. Frames are simulated by clipping the global scene around poses
driving down the road.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, inverse_transform_points
from .mapping import ROAD, SIDEWALK


@dataclass
class SyntheticScene:
    xyz: np.ndarray  # (N, 3) global frame
    class_id: np.ndarray  # (N,)
    poses: list[Pose]
    curb_lines_y: tuple[float, float]
    length: float
    frame_radius: float = 60.0

    def frames(self):
        """Yield (cloud, class_id, instance_id, pose) per pose, sensor frame."""
        for pose in self.poses:
            near = np.linalg.norm(self.xyz[:, :2] - pose.translation[:2], axis=1) <= self.frame_radius
            local = inverse_transform_points(self.xyz[near], pose)
            cloud = np.column_stack((local, np.zeros(len(local))))
            cls = self.class_id[near]
            yield cloud, cls, np.zeros(len(cls), dtype=np.uint16), pose

    def write_kitti(self, seq_dir) -> None:
        """Write the scene as a SemanticKITTI-layout sequence directory."""
        from pathlib import Path

        seq_dir = Path(seq_dir)
        (seq_dir / "velodyne").mkdir(parents=True, exist_ok=True)
        (seq_dir / "labels").mkdir(parents=True, exist_ok=True)
        pose_lines = []
        for i, (cloud, cls, inst, pose) in enumerate(self.frames()):
            (seq_dir / "velodyne" / f"{i:06d}.bin").write_bytes(
                cloud.astype("<f4").tobytes()
            )
            records = (
                (inst.astype(np.uint32) << 16) | cls.astype(np.uint32)
            ).astype("<u4")
            (seq_dir / "labels" / f"{i:06d}.label").write_bytes(records.tobytes())
            mat = pose.as_matrix()[:3, :4]
            pose_lines.append(" ".join(f"{v:.9e}" for v in mat.ravel()))
        (seq_dir / "poses.txt").write_text("\n".join(pose_lines) + "\n")
        tr = np.eye(4)[:3, :4]
        (seq_dir / "calib.txt").write_text(
            "Tr: " + " ".join(f"{v:.9e}" for v in tr.ravel()) + "\n"
        )


def straight_road_scene(
    length: float = 100.0,
    road_width: float = 7.0,
    curb_height: float = 0.15,
    n_frames: int = 20,
    band_step: float = 0.1,
    fill_step: float = 0.3,
    gap: tuple[float, float] | None = None,
    gap_side: int = +1,
) -> SyntheticScene:
    """Two parallel curbs at y = +-road_width/2 along x in [0, length].

    gap = (x_start, x_stop) removes the candidate-generating band points of
    the curb on side gap_side (+1 = upper curb) over that open x interval.
    """
    half = road_width / 2.0
    xyz_parts = []
    cls_parts = []

    # Dense bands around each curb line: road points just inside, raised
    # sidewalk points just outside, offsets chosen to share 0.2 m cells.
    xs = np.arange(0.0, length + 1e-9, band_step)
    for side in (-1, +1):
        for dy in (0.05, 0.15, 0.25):
            for inward in (True, False):
                y = side * (half - dy) if inward else side * (half + dy)
                band_x = xs
                if gap is not None and side == gap_side:
                    band_x = xs[(xs <= gap[0]) | (xs >= gap[1])]
                pts = np.column_stack(
                    (
                        band_x,
                        np.full(len(band_x), y),
                        np.full(len(band_x), 0.0 if inward else curb_height),
                    )
                )
                xyz_parts.append(pts)
                cls_parts.append(np.full(len(band_x), ROAD if inward else SIDEWALK))

    # Sparser fill for the road interior and the sidewalks.
    fill_x = np.arange(0.0, length + 1e-9, fill_step)
    road_y = np.arange(-half + 0.4, half - 0.4 + 1e-9, fill_step)
    gx, gy = np.meshgrid(fill_x, road_y)
    road_fill = np.column_stack((gx.ravel(), gy.ravel(), np.zeros(gx.size)))
    xyz_parts.append(road_fill)
    cls_parts.append(np.full(len(road_fill), ROAD))
    for side in (-1, +1):
        side_y = side * np.arange(half + 0.4, half + 3.0, fill_step)
        gx, gy = np.meshgrid(fill_x, side_y)
        side_fill = np.column_stack(
            (gx.ravel(), gy.ravel(), np.full(gx.size, curb_height))
        )
        xyz_parts.append(side_fill)
        cls_parts.append(np.full(len(side_fill), SIDEWALK))

    xyz = np.concatenate(xyz_parts)
    class_id = np.concatenate(cls_parts).astype(np.uint16)

    spacing = length / n_frames
    poses = [
        Pose(np.eye(3), np.array([spacing / 2 + k * spacing, 0.0, 0.0]), frame_index=k)
        for k in range(n_frames)
    ]
    return SyntheticScene(xyz, class_id, poses, (-half, half), length)


def corner_pieces(angle_deg: float = 45.0, step: float = 0.1, arm_length: float = 10.0,
                  joint: tuple[float, float] = (50.0, 0.0)):
    """Two curb pieces in adjacent tiles meeting at the given turn angle.

    Returns [(tile_index, [points]), ...] shaped for merge_tiles. The first
    piece runs along +x and ends just left of the joint; the second leaves
    the joint at angle_deg.
    """
    jx, jy = joint
    s = np.arange(step, arm_length + 1e-9, step)
    a = np.column_stack((jx - s[::-1], np.full(len(s), jy), np.zeros(len(s))))
    theta = np.deg2rad(angle_deg)
    direction = np.array([np.cos(theta), np.sin(theta)])
    b = np.column_stack(
        (np.array([jx, jy]) + s[:, None] * direction, np.zeros(len(s)))
    )
    tile_a = (int(np.floor((jx - 1.0) / 50.0)), int(np.floor(jy / 50.0)))
    tile_b = (int(np.floor((jx + 1.0) / 50.0)), int(np.floor(jy / 50.0)))
    return [(tile_a, [a]), (tile_b, [b])]
