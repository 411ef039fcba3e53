"""Command-line driver.

Exit codes: 0 success, 2 input error (bad or missing files, config or hash
mismatch), 3 pipeline error (a stage failed on valid input).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from .config import ConfigError, PipelineConfig, toy_config
from .costmeter import CostError, OpRecorder, cost_report, count_ops, load_trace, write_cost_csv
from .evaluator import ap_overall, evaluate_frame
from .formats import (FormatError, load_checkpoint, read_grasps, save_checkpoint, write_grasps, write_grid,
                      write_loss_curve, write_pgm)
from .labeler import SceneLabels, label_scene, save_label_summary
from .model import SpikeGraspNet
from .pipeline import infer_scene
from .scene import (SceneDescription, SceneError, StereoRig, generate_scene, load_scene, raycast_camera,
                    render_luminance, render_mask, save_scene, single_sphere_scene)
from .spikecam import SpikeCamError, simulate, static_sequence, write_spk
from .training import make_example, train_tiny

EXIT_OK, EXIT_INPUT, EXIT_PIPELINE = 0, 2, 3
log = logging.getLogger("spikegrasp")


class InputError(Exception):
    pass


INPUT_ERRORS = (InputError, ConfigError, SceneError, FormatError, SpikeCamError, CostError, FileNotFoundError,
                json.JSONDecodeError, KeyError)


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else toy_config()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg.validate()


def frame_id(scene_path: Path) -> str:
    return scene_path.parent.name if scene_path.name == "scene.json" else scene_path.stem


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise InputError(f"{what} not found: {path}")
    return path


def _load_scene(path) -> SceneDescription:
    return load_scene(_require(Path(path), "scene file"))


# ---------------------------------------------------------------- subcommands

def write_scene_dir(scene: SceneDescription, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    save_scene(scene, out / "scene.json")
    written = [out / "scene.json"]
    for cam in ("left", "right"):
        view = raycast_camera(scene, cam)
        lum = render_luminance(scene, cam, view=view)
        mask = render_mask(scene, cam, view=view)
        write_pgm(out / f"{cam}.pgm", lum.values, vmax=1.0, config_hash=scene.config_hash)
        write_pgm(out / f"mask_{cam}.pgm", mask.labels, vmax=255, config_hash=scene.config_hash)
        written += [out / f"{cam}.pgm", out / f"mask_{cam}.pgm"]
    return written


def cmd_simulate(args) -> int:
    cfg = load_config(args)
    rig = StereoRig.looking_down(cfg.rig, cfg.scene.table_height)
    if args.sphere:
        scene = single_sphere_scene(rig=rig, config=cfg.scene)
        scene = SceneDescription(cfg.seed, scene.objects, scene.table_height, rig, scene.lighting, cfg.hash)
    else:
        scene = generate_scene(cfg.seed, args.objects, cfg.scene, rig, cfg.hash)
    write_scene_dir(scene, Path(args.out))
    log.info("scene with %d objects written to %s", len(scene.objects), args.out)
    return EXIT_OK


def cmd_spike(args) -> int:
    cfg = load_config(args)
    scene = _load_scene(args.scene)
    frames = args.frames or cfg.camera.frames
    theta = args.theta or cfg.camera.theta
    cams = ("left", "right") if args.camera == "both" else (args.camera,)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    for cam in cams:
        lum = render_luminance(scene, cam)
        stream = simulate(static_sequence(lum, frames), theta, cfg.camera.readout_rate, camera=cam)
        path = out if len(cams) == 1 else out.with_name(f"{out.stem}.{cam}.spk")
        write_spk(stream, path)
        log.info("%s stream: %d spikes -> %s", cam, int(stream.frames.sum()), path)
    return EXIT_OK


def write_label_dir(labels: SceneLabels, out: Path, config_hash: str) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    labels.save(out / "labels.npz", config_hash)
    write_grid(out / "graspness.f32", labels.graspness_map, config_hash)
    write_grid(out / "objectness.f32", labels.objectness_map, config_hash)
    write_pgm(out / "graspness.pgm", labels.graspness_map, vmax=1.0, config_hash=config_hash)
    save_label_summary(labels, out / "candidates.txt", config_hash)
    return [out / n for n in ("labels.npz", "graspness.f32", "objectness.f32", "graspness.pgm", "candidates.txt")]


def cmd_label(args) -> int:
    cfg = load_config(args)
    scene = _load_scene(args.scene)
    labels = label_scene(scene, cfg.grasp, cfg.labels)
    write_label_dir(labels, Path(args.out), cfg.hash)
    return EXIT_OK


def _scene_files(root: Path) -> list[Path]:
    if root.is_file():
        return [root]
    files = sorted(root.rglob("scene.json")) or sorted(p for p in root.rglob("*.json") if p.name != "manifest.json")
    if not files:
        raise InputError(f"no scene files under {root}")
    return files


def _dataset(root: Path, cfg: PipelineConfig):
    examples = []
    for path in _scene_files(root):
        scene = load_scene(path)
        cached = path.parent / "labels.npz"
        labels = SceneLabels.load(cached) if path.name == "scene.json" and cached.exists() else None
        examples.append(make_example(scene, cfg, labels))
    return examples


def train_and_save(cfg: PipelineConfig, dataset, out: Path, steps: int) -> list[Path]:
    model, curve = train_tiny(dataset, cfg, steps=steps)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, model.state_dict(), cfg.hash, {"steps": steps, "n_scenes": len(dataset)})
    curve_path = out.with_name(out.name + ".loss.csv")
    write_loss_curve(curve_path, curve, cfg.hash)
    if curve:
        log.info("total loss %.5f -> %.5f", curve[0]["total"], curve[-1]["total"])
    return [out, curve_path]


def cmd_train(args) -> int:
    cfg = load_config(args)
    if args.data:
        dataset = _dataset(_require(Path(args.data), "data directory"), cfg)
    else:
        from .training import build_toy_dataset
        dataset = build_toy_dataset(cfg)
    steps = args.steps if args.steps is not None else args.epochs * len(dataset) * cfg.train.epoch_passes
    train_and_save(cfg, dataset, Path(args.out), steps)
    return EXIT_OK


def load_model(path: Path, cfg: PipelineConfig) -> SpikeGraspNet:
    state, manifest = load_checkpoint(_require(path, "checkpoint"))
    if manifest.get("config_hash") and manifest["config_hash"] != cfg.hash:
        raise InputError(f"checkpoint config hash {manifest['config_hash']} does not match config {cfg.hash}")
    model = SpikeGraspNet(cfg)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise InputError(f"checkpoint does not fit the configured model: {exc}") from exc
    return model


def run_infer(cfg: PipelineConfig, scene_path: Path, model: SpikeGraspNet, out: Path) -> list[Path]:
    scene = load_scene(scene_path)
    result = infer_scene(model, scene, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_grasps(out / "grasps.txt", result.grasps, frame_id(scene_path), cfg.hash)
    write_grid(out / "objectness.f32", result.maps.objectness, cfg.hash)
    write_grid(out / "graspness.f32", result.maps.graspness, cfg.hash)
    write_pgm(out / "objectness.pgm", result.maps.objectness, vmax=1.0, config_hash=cfg.hash)
    write_pgm(out / "graspness.pgm", result.maps.graspness, vmax=1.0, config_hash=cfg.hash)
    result.recorder.save(out / "trace.json", cfg.hash)
    log.info("%d grasps written to %s", len(result.grasps), out / "grasps.txt")
    return [out / n for n in ("grasps.txt", "objectness.f32", "graspness.f32", "objectness.pgm",
                              "graspness.pgm", "trace.json")]


def cmd_infer(args) -> int:
    cfg = load_config(args)
    scene_path = _require(Path(args.scene), "scene file")
    load_scene(scene_path)
    model = load_model(Path(args.checkpoint), cfg)
    run_infer(cfg, scene_path, model, Path(args.out))
    return EXIT_OK


def run_eval(cfg: PipelineConfig, grasp_root: Path, scene_root: Path, out: Path):
    scenes = {frame_id(p): p for p in _scene_files(scene_root)}
    files = [grasp_root] if grasp_root.is_file() else sorted(grasp_root.rglob("grasps*.txt"))
    if not files:
        raise InputError(f"no grasp files under {grasp_root}")
    frames, ids = [], []
    for path in files:
        grasps, header = read_grasps(path)
        fid = header.get("frame_id", "")
        if header.get("config_hash") != cfg.hash:
            raise InputError(f"{path}: config hash {header.get('config_hash')} does not match {cfg.hash}")
        if fid not in scenes:
            raise InputError(f"{path}: no scene for frame {fid!r}")
        frames.append(evaluate_frame(grasps, load_scene(scenes[fid]), cfg.eval, cfg.grasp, cfg.labels))
        ids.append(fid)
    report = ap_overall(frames, cfg.eval.friction_set, ids)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(out, cfg.eval, cfg.hash)
    log.info("AP %.4f  AP_0.4 %s  AP_0.8 %s", report.ap, report.ap_04, report.ap_08)
    return report


def cmd_eval(args) -> int:
    cfg = load_config(args)
    run_eval(cfg, _require(Path(args.grasps), "grasp directory"), _require(Path(args.scenes), "scene directory"),
             Path(args.out))
    return EXIT_OK


def cmd_cost(args) -> int:
    trace = load_trace(_require(Path(args.trace), "trace file"))
    report = cost_report(count_ops(trace))
    write_cost_csv(report, args.out, trace.get("config_hash", ""))
    log.info("cost ratio %.5f", report["ratio"])
    return EXIT_OK


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_suite(args) -> int:
    from .training import toy_scenes
    cfg = load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    files = [out / "config.json"]
    scene_dirs = []
    examples = []
    for k, scene in enumerate(toy_scenes(cfg)):
        scene = SceneDescription(scene.seed, scene.objects, scene.table_height, scene.camera_rig, scene.lighting,
                                 cfg.hash)
        d = out / "scenes" / f"scene_{k:03d}"
        files += write_scene_dir(scene, d)
        labels = label_scene(scene, cfg.grasp, cfg.labels)
        files += write_label_dir(labels, d, cfg.hash)
        examples.append(make_example(scene, cfg, labels))
        scene_dirs.append(d)
    files += train_and_save(cfg, examples, out / "model.ckpt", cfg.train.steps)
    model = load_model(out / "model.ckpt", cfg)
    for d in scene_dirs:
        files += run_infer(cfg, d / "scene.json", model, out / "predictions" / d.name)
    run_eval(cfg, out / "predictions", out / "scenes", out / "report.csv")
    files.append(out / "report.csv")
    trace = load_trace(out / "predictions" / scene_dirs[0].name / "trace.json")
    write_cost_csv(cost_report(count_ops(trace)), out / "cost.csv", cfg.hash)
    files.append(out / "cost.csv")
    manifest = {"config_hash": cfg.hash,
                "files": {str(p.relative_to(out)): sha256(p) for p in files}}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON (default: built-in toy config)")
    common.add_argument("--seed", type=int, help="root seed override")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="spikegrasp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a scene and render it")
    p.add_argument("--objects", type=int, default=2)
    p.add_argument("--sphere", action="store_true", help="single centered sphere instead of a random scene")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("spike", parents=[common], help="simulate spike streams for a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--frames", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--camera", choices=("left", "right", "both"), default="both")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spike)

    p = sub.add_parser("label", parents=[common], help="generate grasp labels for a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", parents=[common], help="train on a directory of scenes")
    p.add_argument("--data", help="directory of scene folders (default: built-in toy set)")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--steps", type=int, help="optimizer steps (overrides --epochs)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="detect grasps in a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="score grasp files against scenes")
    p.add_argument("--grasps", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cost", parents=[common], help="operation counts and cost ratio of a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("suite", parents=[common], help="simulate, label, train, infer, evaluate and cost")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_suite)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    threads = os.environ.get("SPIKEGRASP_THREADS")
    if threads:
        torch.set_num_threads(max(1, int(threads)))
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"spikegrasp {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - every other failure is a pipeline error
        print(f"spikegrasp {args.command}: pipeline error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
