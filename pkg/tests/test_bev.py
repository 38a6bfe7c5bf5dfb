import numpy as np
import pytest

from curbmap.bev import (
    BevSpec,
    curb_point_mask,
    encode_frame,
    load_tensor,
    project_labels,
    relabel_points,
    save_mask_png,
    save_tensor,
)
from curbmap.geometry import CurbPolyline
from curbmap.kitti import FrameAnnotation
from curbmap.mapping import ROAD, SIDEWALK, ClassPolicy

CAR = 10


def test_spec_dimensions():
    spec = BevSpec()
    assert spec.width == 384
    assert spec.height == 512
    with pytest.raises(Exception):
        BevSpec(dilation_kernel=4)
    with pytest.raises(Exception):
        BevSpec(resolution=0.0)


def test_pixel_of_examples():
    spec = BevSpec()
    row, col, inside = spec.pixel_of(np.array([[0.05, 0.05], [-19.15, -25.55], [19.3, 0.0]]))
    assert inside.tolist() == [True, True, False]
    assert (row[0], col[0]) == (256, 192)
    assert (row[1], col[1]) == (0, 0)


def test_encode_density_matches_brute_force(rng):
    spec = BevSpec()
    cloud = np.column_stack((rng.uniform(-19, 19, (2000, 1)),
                             rng.uniform(-25, 25, (2000, 1)),
                             rng.uniform(-2.4, 0.4, (2000, 1)),
                             np.zeros((2000, 1))))
    raster = encode_frame(cloud, spec)
    counts = np.zeros((spec.height, spec.width), dtype=int)
    for x, y, _z, _i in cloud:
        r = int(np.floor((y + 25.6) / 0.1))
        c = int(np.floor((x + 19.2) / 0.1))
        counts[r, c] += 1
    expected = np.log1p(counts) / np.log1p(counts.max())
    assert np.allclose(raster.density, expected, atol=1e-6)
    assert counts.sum() == 2000  # all in bounds by construction


def test_encode_height_slices():
    spec = BevSpec()
    cloud = np.array([[0.0, 0.0, -2.3, 0.0], [1.0, 0.0, 0.2, 0.0], [2.0, 0.0, 5.0, 0.0]])
    raster = encode_frame(cloud, spec)
    assert raster.height_channels.shape == (6, 512, 384)
    # z=-2.3 falls in the first slice, z=0.2 in the last, z=5.0 in none.
    r, c, _ = spec.pixel_of(cloud[:, :2])
    assert raster.height_channels[0, r[0], c[0]] == 1
    assert raster.height_channels[5, r[1], c[1]] == 1
    assert raster.height_channels[:, r[2], c[2]].sum() == 0
    assert len(raster.channel_names) == 7


def test_project_labels_band_width():
    # A straight curb along x at y=0: kernel 7 dilation makes the band
    # exactly 7 pixels tall (+-0.3 m at 0.1 m/px) away from the ends.
    spec = BevSpec()
    curb = CurbPolyline(1, [[-10.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
    label, instance = project_labels(FrameAnnotation(0, [curb]), spec)
    col = spec.pixel_of(np.array([[0.0, 0.0]]))[1][0]
    column = label[:, col]
    assert column.sum() == 7
    rows = np.flatnonzero(column)
    assert rows.tolist() == list(range(rows[0], rows[0] + 7))
    assert (instance[column, col] == 1).all()


def test_project_labels_two_instances_distinct():
    # Two curbs 0.8 m apart stay distinct after +-0.3 m dilation.
    spec = BevSpec()
    a = CurbPolyline(1, [[-5.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    b = CurbPolyline(2, [[-5.0, 0.8, 0.0], [5.0, 0.8, 0.0]])
    label, instance = project_labels(FrameAnnotation(0, [a, b]), spec)
    ids = set(np.unique(instance)) - {0}
    assert ids == {1, 2}
    # No pixel of instance 1 touches a pixel labelled 2 and vice versa:
    # the two bands are separated by at least one empty row.
    col = spec.pixel_of(np.array([[0.0, 0.0]]))[1][0]
    column = instance[:, col]
    between = column[np.flatnonzero(column == 1).max() + 1:np.flatnonzero(column == 2).min()]
    assert (between == 0).all()


def test_project_labels_empty():
    label, instance = project_labels(FrameAnnotation(0, []))
    assert not label.any()
    assert not instance.any()


def test_dilation_monotone_in_kernel():
    curb = CurbPolyline(1, [[-5.0, 0.0, 0.0], [5.0, 3.0, 0.0]])
    areas = []
    for k in (1, 3, 7, 11):
        label, _ = project_labels(FrameAnnotation(0, [curb]), BevSpec(dilation_kernel=k))
        areas.append(int(label.sum()))
    assert areas == sorted(areas)
    assert areas[0] < areas[-1]


def test_relabel_points_car_unchanged():
    spec = BevSpec()
    curb = CurbPolyline(1, [[-5.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    label, _ = project_labels(FrameAnnotation(0, [curb]), spec)
    cloud = np.array([
        [0.0, 0.0, 0.0, 0.0],   # on band, road -> relabeled
        [0.0, 0.1, 0.0, 0.0],   # on band, sidewalk -> relabeled
        [0.0, 0.0, 0.0, 0.0],   # on band, car -> unchanged
        [0.0, 10.0, 0.0, 0.0],  # off band, road -> unchanged
    ])
    classes = np.array([ROAD, SIDEWALK, CAR, ROAD], dtype=np.uint16)
    out = relabel_points(cloud, classes, label, spec, ClassPolicy(), curb_class=192)
    assert out.tolist() == [192, 192, CAR, ROAD]
    mask = curb_point_mask(cloud, classes, label, spec, ClassPolicy())
    assert mask.tolist() == [True, True, False, False]


def test_save_mask_png(tmp_path):
    from PIL import Image

    mask = np.zeros((8, 6), dtype=bool)
    mask[2, 3] = True
    path = tmp_path / "m.png"
    save_mask_png(mask, path)
    img = np.asarray(Image.open(path))
    assert img.shape == (8, 6)
    assert img.sum() == 255
    assert img[8 - 1 - 2, 3] == 255  # flipped vertically for display


def test_tensor_round_trip(tmp_path):
    spec = BevSpec()
    cloud = np.array([[0.0, 0.0, -1.0, 0.0], [1.0, 1.0, 0.2, 0.0]])
    raster = encode_frame(cloud, spec)
    curb = CurbPolyline(1, [[-5.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    raster.label_mask, raster.instance_mask = project_labels(FrameAnnotation(0, [curb]), spec)
    path = tmp_path / "frame.bevt"
    save_tensor(raster, path)
    tensor, names = load_tensor(path)
    assert tensor.shape == (9, 512, 384)
    assert names[0] == "density" and names[-2:] == ["label", "instance"]
    assert np.allclose(tensor[0], raster.density)
    assert np.array_equal(tensor[7] > 0, raster.label_mask)
    assert np.array_equal(tensor[8].astype(int), raster.instance_mask)


def test_load_tensor_bad_magic(tmp_path):
    path = tmp_path / "bad.bevt"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(Exception):
        load_tensor(path)
