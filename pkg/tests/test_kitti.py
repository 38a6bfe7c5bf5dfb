import struct

import numpy as np
import pytest

from curbmap import kitti
from curbmap.errors import CalibrationError, ConsistencyError, FormatError
from curbmap.geometry import CurbPolyline


def test_read_point_cloud_empty(tmp_path):
    path = tmp_path / "empty.bin"
    path.write_bytes(b"")
    assert len(kitti.read_point_cloud(path)) == 0


def test_read_point_cloud_single_record(tmp_path):
    path = tmp_path / "one.bin"
    path.write_bytes(struct.pack("<4f", 1.0, 2.0, 3.0, 0.5))
    cloud = kitti.read_point_cloud(path)
    assert cloud.shape == (1, 4)
    assert np.allclose(cloud[0], [1.0, 2.0, 3.0, 0.5])


def test_read_point_cloud_truncated(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00" * 20)
    with pytest.raises(FormatError) as err:
        kitti.read_point_cloud(path)
    assert err.value.offset == 16


def test_read_labels_bit_split(tmp_path):
    path = tmp_path / "a.label"
    path.write_bytes(struct.pack("<2I", 0x00000028, 0x00010030))
    class_id, instance_id = kitti.read_labels(path)
    assert list(class_id) == [40, 48]
    assert list(instance_id) == [0, 1]


def test_read_labels_histogram_matches_independent_reader(tmp_path):
    rng = np.random.default_rng(7)
    classes = rng.choice([0, 40, 48, 70], size=500).astype(np.uint32)
    records = (rng.integers(0, 5, 500).astype(np.uint32) << 16) | classes
    path = tmp_path / "b.label"
    path.write_bytes(records.astype("<u4").tobytes())
    class_id, _ = kitti.read_labels(path)
    # Second, minimal parser: struct-based, record at a time.
    raw = path.read_bytes()
    expected = [struct.unpack_from("<I", raw, 4 * i)[0] & 0xFFFF for i in range(500)]
    assert np.bincount(class_id, minlength=71).tolist() == np.bincount(
        expected, minlength=71
    ).tolist()


def _write_calib(path, tr):
    path.write_text("P0: " + " ".join(["0"] * 12) + "\nTr: " + " ".join(
        f"{v}" for v in np.asarray(tr)[:3, :4].ravel()) + "\n")


def test_read_poses_identity(tmp_path):
    poses_file = tmp_path / "poses.txt"
    poses_file.write_text(" ".join(f"{v}" for v in np.eye(4)[:3, :4].ravel()) + "\n")
    calib = tmp_path / "calib.txt"
    _write_calib(calib, np.eye(4))
    poses = kitti.read_poses(poses_file, calib)
    assert len(poses) == 1
    assert np.allclose(poses[0].as_matrix(), np.eye(4))


def test_read_poses_translation_conjugation(tmp_path):
    # Tr a pure translation: Tr^-1 @ I @ Tr = I.
    tr = np.eye(4)
    tr[:3, 3] = [1.0, -2.0, 0.5]
    poses_file = tmp_path / "poses.txt"
    poses_file.write_text(" ".join(f"{v}" for v in np.eye(4)[:3, :4].ravel()) + "\n")
    calib = tmp_path / "calib.txt"
    _write_calib(calib, tr)
    poses = kitti.read_poses(poses_file, calib)
    assert np.allclose(poses[0].as_matrix(), np.eye(4), atol=1e-12)


def test_read_poses_missing_tr(tmp_path):
    poses_file = tmp_path / "poses.txt"
    poses_file.write_text(" ".join(["0"] * 12))
    calib = tmp_path / "calib.txt"
    calib.write_text("P0: 1 2 3\n")
    with pytest.raises(CalibrationError):
        kitti.read_poses(poses_file, calib)


def _annotation(frame=0):
    return kitti.FrameAnnotation(frame, [
        CurbPolyline(1, [[0.0, 0.0, 0.0], [1.0, 0.0, 0.1], [2.0, 0.5, 0.0]]),
        CurbPolyline(2, [[0.0, 5.0, 0.0], [1.0, 5.0, 0.0]]),
    ])


def test_annotation_round_trip(tmp_path):
    path = tmp_path / "000000.curb"
    original = _annotation()
    kitti.write_polyline_annotation(original, path)
    loaded = kitti.read_polyline_annotation(path)
    assert len(loaded.curbs) == 2
    for a, b in zip(original.curbs, loaded.curbs):
        assert a.instance_id == b.instance_id
        assert np.allclose(a.points, b.points, atol=1e-6)  # stored as float32


def test_annotation_empty_and_size_arithmetic(tmp_path):
    empty = tmp_path / "empty.curb"
    kitti.write_polyline_annotation(kitti.FrameAnnotation(0, []), empty)
    assert empty.stat().st_size == 12  # magic + version + count
    one = tmp_path / "one.curb"
    kitti.write_polyline_annotation(
        kitti.FrameAnnotation(0, [CurbPolyline(7, [[0, 0, 0], [1, 0, 0], [2, 0, 0]])]), one
    )
    assert one.stat().st_size == 12 + 8 + 36


def test_annotation_bad_magic(tmp_path):
    path = tmp_path / "bad.curb"
    path.write_bytes(b"NOPE" + b"\x00" * 8)
    with pytest.raises(FormatError):
        kitti.read_polyline_annotation(path)


def test_pointwise_labels_all_false(tmp_path):
    class_id = np.array([40, 48, 70], dtype=np.uint16)
    instance_id = np.array([0, 1, 0], dtype=np.uint16)
    out = tmp_path / "out.label"
    kitti.write_pointwise_labels(class_id, instance_id, [False] * 3, out, curb_class=192)
    loaded_class, loaded_instance = kitti.read_labels(out)
    assert list(loaded_class) == [40, 48, 70]
    assert list(loaded_instance) == [0, 1, 0]


def test_pointwise_labels_single_change(tmp_path):
    class_id = np.array([40, 48], dtype=np.uint16)
    instance_id = np.zeros(2, dtype=np.uint16)
    out = tmp_path / "out.label"
    kitti.write_pointwise_labels(class_id, instance_id, [True, False], out, curb_class=192)
    loaded_class, _ = kitti.read_labels(out)
    assert list(loaded_class) == [192, 48]


def test_pointwise_labels_count_oracle(tmp_path):
    rng = np.random.default_rng(3)
    class_id = rng.choice([40, 48, 10], 200).astype(np.uint16)
    mask = rng.random(200) < 0.3
    out = tmp_path / "out.label"
    kitti.write_pointwise_labels(class_id, np.zeros(200, np.uint16), mask, out, curb_class=192)
    loaded_class, _ = kitti.read_labels(out)
    assert (loaded_class == 192).sum() == mask.sum()


def test_pointwise_labels_length_mismatch(tmp_path):
    with pytest.raises(ConsistencyError):
        kitti.write_pointwise_labels(
            np.zeros(3, np.uint16), np.zeros(3, np.uint16), [True], tmp_path / "x.label", 192
        )


def test_sequence_paths_and_iteration(tmp_path):
    from curbmap.synthetic import straight_road_scene

    scene = straight_road_scene(length=20.0, n_frames=3)
    seq = tmp_path / "00"
    scene.write_kitti(seq)
    paths = kitti.SequencePaths.from_dir(seq)
    assert paths.frame_count == 3
    poses = kitti.read_poses(paths.poses_file, paths.calib_file)
    frames = list(kitti.iter_sequence(paths, poses))
    assert len(frames) == 3
    cloud, class_id, _inst, pose = frames[0]
    assert len(cloud) == len(class_id)
    assert pose.frame_index == 0
