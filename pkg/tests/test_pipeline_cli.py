import numpy as np
import pytest

from curbmap.cli import main
from curbmap.errors import InputValidationError
from curbmap.geometry import CIMap, CurbPolyline
from curbmap.kitti import FrameAnnotation, write_polyline_annotation
from curbmap.pipeline import (
    PipelineConfig,
    read_ci_map,
    run_eval,
    run_stage1,
    run_stage2,
    write_ci_map,
)
from curbmap.synthetic import straight_road_scene


# --- configuration -------------------------------------------------------


def test_config_yaml_round_trip(tmp_path):
    config = PipelineConfig(r1=3.0, phi=15.0, seed=7)
    path = tmp_path / "config.yaml"
    config.to_yaml(path)
    loaded = PipelineConfig.from_yaml(path)
    assert loaded.r1 == 3.0
    assert loaded.phi == 15.0
    assert loaded.seed == 7
    assert tuple(loaded.bev_x_range) == (-19.2, 19.2)


def test_config_unknown_key_rejected(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("r1: 2.6\nnot_a_parameter: 1\n")
    with pytest.raises(InputValidationError):
        PipelineConfig.from_yaml(path)


def test_config_env_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("CURBMAP_SEQUENCE_DIR", "/data/seq")
    monkeypatch.setenv("CURBMAP_OUTPUT_DIR", str(tmp_path / "o"))
    config = PipelineConfig().with_env_overrides()
    assert config.sequence_dir == "/data/seq"
    assert config.output_dir == str(tmp_path / "o")


def test_config_hash_ignores_run_control():
    a = PipelineConfig(output_dir="x", workers=1)
    b = PipelineConfig(output_dir="y", workers=8, write_bev=True)
    c = PipelineConfig(r1=2.7)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()


# --- CI map serialization ------------------------------------------------


def test_ci_map_round_trip(tmp_path):
    curbs = [
        CurbPolyline(1, [[0.0, 0.0, 0.0], [1.0, 0.5, 0.1]]),
        CurbPolyline(2, [[2.0, 2.0, 0.0], [3.0, 2.0, 0.0], [4.0, 2.5, 0.0]]),
    ]
    ci = CIMap(curbs=curbs, metadata={"seed": "0"})
    path = tmp_path / "ci_map.txt"
    write_ci_map(ci, path)
    loaded = read_ci_map(path)
    assert loaded.metadata == {"seed": "0"}
    assert [c.instance_id for c in loaded.curbs] == [1, 2]
    for a, b in zip(ci.curbs, loaded.curbs):
        assert np.allclose(a.points, b.points, atol=1e-9)


def test_ci_map_bad_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("something else\n")
    with pytest.raises(InputValidationError):
        read_ci_map(path)


# --- stage runs ----------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_sequence(tmp_path_factory):
    seq = tmp_path_factory.mktemp("seq") / "00"
    straight_road_scene(length=30.0, n_frames=4).write_kitti(seq)
    return seq


def test_run_stage1_and_stage2_end_to_end(tiny_sequence, tmp_path):
    config = PipelineConfig(sequence_dir=str(tiny_sequence), output_dir=str(tmp_path / "out"))
    ci = run_stage1(config)
    assert len(ci.curbs) == 2
    assert (tmp_path / "out" / "ci_map.txt").exists()
    assert (tmp_path / "out" / "stage1_manifest.json").exists()

    annotations, failures = run_stage2(config, ci)
    assert failures == []
    assert len(annotations) == 4
    for annotation in annotations:
        assert sorted({c.instance_id for c in annotation.curbs}) == [1, 2]
    assert len(list((tmp_path / "out" / "annotations").glob("*.curb"))) == 4
    assert (tmp_path / "out" / "stage2_stats.txt").exists()


def test_run_eval_identical_annotations_perfect(tmp_path):
    pred = tmp_path / "pred"
    gt = tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    curb = CurbPolyline(1, [[-5.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    for d in (pred, gt):
        write_polyline_annotation(FrameAnnotation(0, [curb]), d / "000000.curb")
    config = PipelineConfig(output_dir=str(tmp_path / "out"))
    report = run_eval(config, pred, gt)
    assert report.precision == 1.0 and report.recall == 1.0 and report.f1 == 1.0
    assert (tmp_path / "out" / "eval_report.txt").exists()


def test_run_eval_small_shift_tolerated(tmp_path):
    pred = tmp_path / "pred"
    gt = tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    write_polyline_annotation(
        FrameAnnotation(0, [CurbPolyline(1, [[-5.0, 0.0, 0.0], [5.0, 0.0, 0.0]])]),
        gt / "000000.curb",
    )
    # Shift by exactly one pixel (0.1 m): within tolerance 1.
    write_polyline_annotation(
        FrameAnnotation(0, [CurbPolyline(1, [[-5.0, 0.1, 0.0], [5.0, 0.1, 0.0]])]),
        pred / "000000.curb",
    )
    config = PipelineConfig(output_dir=str(tmp_path / "out1"))
    assert run_eval(config, pred, gt).f1 == 1.0
    config = PipelineConfig(output_dir=str(tmp_path / "out0"), tolerance_pixels=0)
    assert run_eval(config, pred, gt).f1 < 1.0

    # A large shift fails at any small tolerance.
    write_polyline_annotation(
        FrameAnnotation(0, [CurbPolyline(1, [[-5.0, 2.0, 0.0], [5.0, 2.0, 0.0]])]),
        pred / "000000.curb",
    )
    config = PipelineConfig(output_dir=str(tmp_path / "out2"))
    report = run_eval(config, pred, gt)
    assert report.precision == 0.0 and report.recall == 0.0


def test_determinism_across_worker_counts(tiny_sequence, tmp_path):
    outputs = []
    for workers in (1, 4):
        out = tmp_path / f"out_w{workers}"
        config = PipelineConfig(
            sequence_dir=str(tiny_sequence), output_dir=str(out), workers=workers
        )
        ci = run_stage1(config)
        run_stage2(config, ci)
        blob = {}
        for path in sorted(out.rglob("*")):
            if path.is_file() and "manifest" not in path.name:
                blob[str(path.relative_to(out))] = path.read_bytes()
        outputs.append(blob)
    assert outputs[0].keys() == outputs[1].keys()
    for name in outputs[0]:
        assert outputs[0][name] == outputs[1][name], name


# --- CLI -----------------------------------------------------------------


def test_cli_end_to_end(tmp_path, capsys):
    seq = tmp_path / "seq"
    out = tmp_path / "out"
    assert main(["gen-synthetic", str(seq), "--length", "30", "--frames", "3"]) == 0
    assert main(["build-map", "--sequence", str(seq), "--out", str(out)]) == 0
    assert (out / "submaps").exists()
    assert main(["grow", "--out", str(out)]) == 0
    assert (out / "tiles").exists()
    assert main(["merge", "--out", str(out)]) == 0
    assert (out / "ci_map.txt").exists()
    assert main(["label", "--sequence", str(seq), "--out", str(out)]) == 0
    ann_dir = out / "annotations"
    assert len(list(ann_dir.glob("*.curb"))) == 3
    assert main(["stats", str(ann_dir)]) == 0
    captured = capsys.readouterr()
    assert "frames: 3" in captured.out
    assert main(["eval", "--out", str(out), str(ann_dir), str(ann_dir)]) == 0
    captured = capsys.readouterr()
    assert "precision: 1.000000" in captured.out


def test_cli_all_and_rasterize(tmp_path):
    seq = tmp_path / "seq"
    out = tmp_path / "out"
    assert main(["gen-synthetic", str(seq), "--length", "30", "--frames", "3"]) == 0
    assert main(["all", "--sequence", str(seq), "--out", str(out)]) == 0
    assert (out / "ci_map.txt").exists()
    assert main(["rasterize", "--sequence", str(seq), "--out", str(out),
                 "--pointwise"]) == 0
    assert len(list((out / "bev").glob("*.bev"))) == 3
    assert len(list((out / "labels").glob("*.label"))) == 3


def test_cli_fatal_error_exit_code(tmp_path):
    assert main(["build-map", "--sequence", str(tmp_path / "missing"),
                 "--out", str(tmp_path / "out")]) == 2
