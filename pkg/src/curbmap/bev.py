"""Bird's-eye-view encoding of frames, label rasterization, and point relabeling.

Frames are encoded as a log-normalized density image plus binary height-slice
channels. Curb annotations are drawn into an instance mask, dilated with a
square kernel, and optionally projected back onto the raw points to relabel
them as curb class.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import binary_dilation

from .errors import InputValidationError
from .kitti import FrameAnnotation
from .mapping import ClassPolicy

DEFAULT_SLICES = tuple(
    (lo, lo + 0.5) for lo in np.arange(-2.5, 0.5, 0.5)
)


@dataclass(frozen=True)
class BevSpec:
    """Raster geometry: rows index y (longitudinal), columns index x (lateral)."""

    resolution: float = 0.1  # meters per pixel
    x_range: tuple[float, float] = (-19.2, 19.2)  # lateral, 384 px
    y_range: tuple[float, float] = (-25.6, 25.6)  # longitudinal, 512 px
    height_slices: tuple = DEFAULT_SLICES
    dilation_kernel: int = 7

    def __post_init__(self):
        if self.resolution <= 0:
            raise InputValidationError("resolution must be positive")
        if self.dilation_kernel < 1 or self.dilation_kernel % 2 == 0:
            raise InputValidationError("dilation_kernel must be a positive odd pixel count")
        slices = tuple(self.height_slices)
        for (a_lo, a_hi), (b_lo, b_hi) in zip(slices, slices[1:]):
            if a_hi > b_lo or a_lo >= a_hi or b_lo >= b_hi:
                raise InputValidationError("height_slices must be ascending and non-overlapping")

    @property
    def width(self) -> int:  # pixels along x
        return int(round((self.x_range[1] - self.x_range[0]) / self.resolution))

    @property
    def height(self) -> int:  # pixels along y
        return int(round((self.y_range[1] - self.y_range[0]) / self.resolution))

    def pixel_of(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Map (N, 2) sensor-frame coordinates to (row, col, in_bounds)."""
        xy = np.asarray(xy, dtype=np.float64)
        col = np.floor((xy[:, 0] - self.x_range[0]) / self.resolution).astype(np.int64)
        row = np.floor((xy[:, 1] - self.y_range[0]) / self.resolution).astype(np.int64)
        inside = (col >= 0) & (col < self.width) & (row >= 0) & (row < self.height)
        return row, col, inside


@dataclass
class BevRaster:
    spec: BevSpec
    density: np.ndarray  # (H, W) float32
    height_channels: np.ndarray  # (S, H, W) uint8
    label_mask: np.ndarray | None = None  # (H, W) bool
    instance_mask: np.ndarray | None = None  # (H, W) int32
    channel_names: list[str] = field(default_factory=list)


def encode_frame(cloud: np.ndarray, spec: BevSpec = BevSpec()) -> BevRaster:
    """Density + height-slice encoding of one frame (no labels)."""
    cloud = np.asarray(cloud, dtype=np.float64)
    xyz = cloud[:, :3]
    row, col, inside = spec.pixel_of(xyz[:, :2])
    counts = np.zeros((spec.height, spec.width), dtype=np.int64)
    np.add.at(counts, (row[inside], col[inside]), 1)
    n_max = counts.max()
    if n_max > 0:
        density = (np.log1p(counts) / np.log1p(n_max)).astype(np.float32)
    else:
        density = np.zeros_like(counts, dtype=np.float32)

    slices = list(spec.height_slices)
    channels = np.zeros((len(slices), spec.height, spec.width), dtype=np.uint8)
    z = xyz[:, 2]
    for s, (z_lo, z_hi) in enumerate(slices):
        in_slice = inside & (z >= z_lo) & (z < z_hi)
        channels[s, row[in_slice], col[in_slice]] = 1
    names = ["density"] + [f"height_{z_lo:+.2f}_{z_hi:+.2f}" for z_lo, z_hi in slices]
    return BevRaster(spec, density, channels, channel_names=names)


def _draw_segment(mask: np.ndarray, spec: BevSpec, a: np.ndarray, b: np.ndarray) -> None:
    """Set every pixel the segment passes through, by supersampling at half
    the pixel pitch."""
    length = np.linalg.norm(b[:2] - a[:2])
    n = max(2, int(np.ceil(length / (spec.resolution / 2))) + 1)
    samples = a[:2] + np.linspace(0, 1, n)[:, None] * (b[:2] - a[:2])
    row, col, inside = spec.pixel_of(samples)
    mask[row[inside], col[inside]] = True


def project_labels(annotation: FrameAnnotation, spec: BevSpec = BevSpec()
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize curb polylines into a dilated (label_mask, instance_mask) pair.

    Each instance is drawn and dilated separately with a square kernel of
    dilation_kernel pixels; where dilated instances overlap the higher
    instance id wins.
    """
    instance_mask = np.zeros((spec.height, spec.width), dtype=np.int32)
    kernel = np.ones((spec.dilation_kernel, spec.dilation_kernel), dtype=bool)
    for curb in sorted(annotation.curbs, key=lambda c: c.instance_id):
        drawn = np.zeros_like(instance_mask, dtype=bool)
        for a, b in zip(curb.points[:-1], curb.points[1:]):
            _draw_segment(drawn, spec, a, b)
        if drawn.any():
            dilated = binary_dilation(drawn, structure=kernel)
            instance_mask[dilated] = curb.instance_id
    return instance_mask != 0, instance_mask


def curb_point_mask(cloud: np.ndarray, class_id: np.ndarray, label_mask: np.ndarray,
                    spec: BevSpec, policy: ClassPolicy) -> np.ndarray:
    """Boolean mask of points that land on a positive pixel and whose prior
    class is road or curb-related."""
    cloud = np.asarray(cloud, dtype=np.float64)
    class_id = np.asarray(class_id)
    row, col, inside = spec.pixel_of(cloud[:, :2])
    on_positive = np.zeros(len(cloud), dtype=bool)
    on_positive[inside] = label_mask[row[inside], col[inside]]
    eligible = policy.mask_of(class_id, policy.road_set | policy.curbside_set)
    return on_positive & eligible


def relabel_points(cloud: np.ndarray, class_id: np.ndarray, label_mask: np.ndarray,
                   spec: BevSpec, policy: ClassPolicy, curb_class: int) -> np.ndarray:
    """Return a class array with curb_class where a point lands on a positive
    pixel and was previously road or curb-related; all other points unchanged."""
    mask = curb_point_mask(cloud, class_id, label_mask, spec, policy)
    out = np.asarray(class_id).copy()
    out[mask] = curb_class
    return out


def save_mask_png(mask: np.ndarray, path) -> None:
    """Write a mask (bool or small ints) as an 8-bit grayscale PNG."""
    from PIL import Image

    arr = np.asarray(mask)
    if arr.dtype == bool:
        img = (arr.astype(np.uint8)) * 255
    else:
        top = max(int(arr.max()), 1)
        img = (arr.astype(np.float64) / top * 255).astype(np.uint8)
    Image.fromarray(img[::-1], mode="L").save(str(path))


def save_tensor(raster: BevRaster, path) -> None:
    """Raw float32 tensor dump: header (magic, dims, channel-name block) + data."""
    channels = [raster.density[None].astype(np.float32),
                raster.height_channels.astype(np.float32)]
    names = list(raster.channel_names)
    if raster.label_mask is not None:
        channels.append(raster.label_mask[None].astype(np.float32))
        names.append("label")
    if raster.instance_mask is not None:
        channels.append(raster.instance_mask[None].astype(np.float32))
        names.append("instance")
    tensor = np.concatenate(channels, axis=0)
    name_block = "\n".join(names).encode()
    with open(path, "wb") as f:
        f.write(b"BEVT")
        f.write(struct.pack("<IIII", tensor.shape[0], tensor.shape[1], tensor.shape[2],
                            len(name_block)))
        f.write(name_block)
        f.write(tensor.astype("<f4").tobytes())


def load_tensor(path) -> tuple[np.ndarray, list[str]]:
    raw = Path(path).read_bytes()
    if raw[:4] != b"BEVT":
        raise InputValidationError(f"{path}: not a BEV tensor dump")
    c, h, w, n = struct.unpack_from("<IIII", raw, 4)
    names = raw[20 : 20 + n].decode().split("\n") if n else []
    tensor = np.frombuffer(raw, dtype="<f4", offset=20 + n).reshape(c, h, w)
    return tensor.copy(), names
