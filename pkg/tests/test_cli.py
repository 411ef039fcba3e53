import json
import subprocess
import sys

import numpy as np
import pytest

from _oracles import evaluate_frame_reference
from spikegrasp.cli import EXIT_INPUT, EXIT_OK, main
from spikegrasp.config import toy_config
from spikegrasp.costmeter import load_trace
from spikegrasp.evaluator import read_report_summary
from spikegrasp.formats import read_grasps, read_grid, read_pgm, save_checkpoint
from spikegrasp.labeler import GripperModel, SceneLabels
from spikegrasp.scene import load_scene
from spikegrasp.spikecam import read_spk


@pytest.fixture(scope="module")
def quick_config(tmp_path_factory):
    cfg = toy_config()
    cfg.train.steps = 60  # enough for the objectness map to cross threshold and emit grasps
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    cfg.save(path)
    return cfg, path


@pytest.fixture(scope="module")
def suite_run(tmp_path_factory, quick_config):
    _cfg, cfg_path = quick_config
    out = tmp_path_factory.mktemp("suite")
    assert main(["suite", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
    return out


def test_simulate_writes_scene_and_images(tmp_path):
    assert main(["simulate", "--objects", "2", "--seed", "4", "--out", str(tmp_path)]) == EXIT_OK
    scene = load_scene(tmp_path / "scene.json")
    seeded = toy_config()
    seeded.seed = 4
    assert scene.seed == 4 and scene.config_hash == seeded.hash
    img, meta = read_pgm(tmp_path / "left.pgm", with_meta=True)
    assert img.shape == (64, 64) and meta["config_hash"] == scene.config_hash
    assert read_pgm(tmp_path / "mask_right.pgm").max() >= 1


def test_spike_both_cameras(tmp_path):
    main(["simulate", "--sphere", "--out", str(tmp_path / "s")])
    assert main(["spike", "--scene", str(tmp_path / "s" / "scene.json"), "--frames", "12",
                 "--out", str(tmp_path / "stream.spk")]) == EXIT_OK
    left = read_spk(tmp_path / "stream.left.spk")
    right = read_spk(tmp_path / "stream.right.spk", camera="right")
    assert left.frames.shape == right.frames.shape == (12, 64, 64)
    assert left.frames.sum() > 0


def test_label_outputs(tmp_path):
    main(["simulate", "--sphere", "--out", str(tmp_path)])
    assert main(["label", "--scene", str(tmp_path / "scene.json"), "--out", str(tmp_path)]) == EXIT_OK
    labels = SceneLabels.load(tmp_path / "labels.npz")
    grid, meta = read_grid(tmp_path / "graspness.f32", with_meta=True)
    assert np.allclose(grid, labels.graspness_map.astype(np.float32))
    assert meta["config_hash"] == toy_config().hash
    with np.load(tmp_path / "labels.npz") as z:
        assert str(z["config_hash"]) == toy_config().hash


def test_missing_file_is_input_error(tmp_path):
    assert main(["infer", "--scene", str(tmp_path / "nope.json"), "--checkpoint", "x", "--out", str(tmp_path)]) \
        == EXIT_INPUT
    assert main(["cost", "--trace", str(tmp_path / "nope.json"), "--out", str(tmp_path / "c.csv")]) == EXIT_INPUT


def test_empty_scene_file_is_input_error(tmp_path):
    (tmp_path / "empty.json").write_text("")
    assert main(["label", "--scene", str(tmp_path / "empty.json"), "--out", str(tmp_path)]) == EXIT_INPUT
    main(["simulate", "--sphere", "--out", str(tmp_path / "s")])
    doc = json.loads((tmp_path / "s" / "scene.json").read_text())
    doc["objects"] = []
    (tmp_path / "none.json").write_text(json.dumps(doc))
    assert main(["label", "--scene", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == EXIT_INPUT


def test_checkpoint_hash_mismatch_is_input_error(tmp_path, trained):
    model, _curve, cfg = trained
    save_checkpoint(tmp_path / "m.ckpt", model.state_dict(), "0000000000000000")
    main(["simulate", "--sphere", "--out", str(tmp_path / "s")])
    assert main(["infer", "--scene", str(tmp_path / "s" / "scene.json"), "--checkpoint", str(tmp_path / "m.ckpt"),
                 "--out", str(tmp_path / "p")]) == EXIT_INPUT


def test_infer_rerun_byte_identical(tmp_path, trained):
    model, _curve, cfg = trained
    save_checkpoint(tmp_path / "m.ckpt", model.state_dict(), cfg.hash)
    main(["simulate", "--sphere", "--out", str(tmp_path / "s")])
    for run in ("a", "b"):
        assert main(["infer", "--scene", str(tmp_path / "s" / "scene.json"), "--checkpoint", str(tmp_path / "m.ckpt"),
                     "--out", str(tmp_path / run)]) == EXIT_OK
    for name in ("grasps.txt", "objectness.f32", "graspness.f32", "objectness.pgm", "graspness.pgm", "trace.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    grasps, header = read_grasps(tmp_path / "a" / "grasps.txt")
    assert header["frame_id"] == "s" and header["config_hash"] == cfg.hash and grasps


def test_suite_manifest_lists_expected_files(suite_run, quick_config):
    cfg, _ = quick_config
    manifest = json.loads((suite_run / "manifest.json").read_text())
    assert manifest["config_hash"] == cfg.hash
    files = set(manifest["files"])
    expected = {"config.json", "model.ckpt", "model.ckpt.loss.csv", "report.csv", "cost.csv"}
    for k in range(cfg.n_scenes):
        s = f"scenes/scene_{k:03d}/"
        p = f"predictions/scene_{k:03d}/"
        expected |= {s + n for n in ("scene.json", "left.pgm", "right.pgm", "mask_left.pgm", "mask_right.pgm",
                                     "labels.npz", "graspness.f32", "objectness.f32", "graspness.pgm",
                                     "candidates.txt")}
        expected |= {p + n for n in ("grasps.txt", "objectness.f32", "graspness.f32", "objectness.pgm",
                                     "graspness.pgm", "trace.json")}
    assert files == expected
    for rel in files:
        assert (suite_run / rel).exists()


def test_suite_report_matches_bruteforce(suite_run, quick_config):
    cfg, _ = quick_config
    summary = read_report_summary(suite_run / "report.csv")
    per_mu = {mu: [] for mu in cfg.eval.friction_set}
    gripper = GripperModel.from_config(cfg.labels)
    for k in range(cfg.n_scenes):
        grasps, _ = read_grasps(suite_run / "predictions" / f"scene_{k:03d}" / "grasps.txt")
        assert grasps
        scene = load_scene(suite_run / "scenes" / f"scene_{k:03d}" / "scene.json")
        for mu, v in evaluate_frame_reference(grasps, scene, cfg.eval, gripper).items():
            per_mu[mu].append(v)
    means = {mu: sum(v) / len(v) for mu, v in per_mu.items()}
    for mu, v in means.items():
        assert summary[f"AP_{mu}"] == pytest.approx(v, abs=1e-12)
    assert summary["AP"] == pytest.approx(sum(means.values()) / len(means), abs=1e-12)


def test_suite_rerun_identical_manifest(suite_run, quick_config, tmp_path):
    _cfg, cfg_path = quick_config
    assert main(["suite", "--config", str(cfg_path), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "manifest.json").read_bytes() == (suite_run / "manifest.json").read_bytes()


def test_eval_detects_hash_mismatch(suite_run, tmp_path):
    other = toy_config()
    other.eval.k_cap = 7
    other.save(tmp_path / "other.json")
    assert main(["eval", "--config", str(tmp_path / "other.json"), "--grasps", str(suite_run / "predictions"),
                 "--scenes", str(suite_run / "scenes"), "--out", str(tmp_path / "r.csv")]) == EXIT_INPUT


def test_cost_subcommand(suite_run, tmp_path):
    trace = suite_run / "predictions" / "scene_000" / "trace.json"
    assert main(["cost", "--trace", str(trace), "--out", str(tmp_path / "cost.csv")]) == EXIT_OK
    rows = dict(line.split(",", 1) for line in (tmp_path / "cost.csv").read_text().splitlines()
                if not line.startswith("#"))
    assert float(rows["table_operands_ratio"]) == pytest.approx(0.342391, abs=1e-6)
    assert rows["table_discrepancy"] == "True"
    assert load_trace(trace)["layers"]


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "spikegrasp.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("simulate", "spike", "label", "train", "infer", "eval", "cost", "suite"):
        assert sub in proc.stdout
