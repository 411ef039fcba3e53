"""Toy dataset assembly and the small deterministic training loop."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch

from .config import PipelineConfig
from .labeler import SceneLabels, label_scene
from .losses import LossBreakdown, disparity_loss, multitask_loss, quarter_disparity_target
from .model import ModelOutput, SpikeGraspNet, stereo_inputs
from .scene import SceneDescription, StereoRig, generate_scene, single_sphere_scene


class DivergenceError(RuntimeError):
    pass


@dataclass
class ToyExample:
    scene: SceneDescription
    left: np.ndarray
    right: np.ndarray
    labels: SceneLabels

    @property
    def seed_views(self) -> np.ndarray:
        """Best labelled approach view per labelled point."""
        return np.argmax(self.labels.view_graspness, axis=1)


def make_example(scene: SceneDescription, config: PipelineConfig, labels: SceneLabels | None = None) -> ToyExample:
    left, right = stereo_inputs(scene, config.camera)
    labels = labels or label_scene(scene, config.grasp, config.labels)
    return ToyExample(scene, left, right, labels)


def toy_scenes(config: PipelineConfig) -> list[SceneDescription]:
    """One centered sphere followed by seeded random scenes."""
    rig = StereoRig.looking_down(config.rig, config.scene.table_height)
    scenes = [single_sphere_scene(rig=rig, config=config.scene)]
    for k in range(1, config.n_scenes):
        scenes.append(generate_scene(config.seed + k, config.n_objects, config.scene, rig, config.hash))
    return scenes


def build_toy_dataset(config: PipelineConfig) -> list[ToyExample]:
    return [make_example(s, config) for s in toy_scenes(config)]


def example_loss(model: SpikeGraspNet, ex: ToyExample, config: PipelineConfig, mode: str = "surrogate",
                 iterations: int | None = None, inner_steps: int | None = None
                 ) -> tuple[LossBreakdown, torch.Tensor, ModelOutput]:
    """Multi-task loss and the auxiliary disparity term for one example."""
    lab = ex.labels
    views = ex.seed_views
    out = model(ex.left, ex.right, lab.pixels, views, iterations=iterations, inner_steps=inner_steps, mode=mode)
    n = np.arange(len(views))
    dt = out.maps.dtype
    q4 = (lab.pixels[:, 0] // 4, lab.pixels[:, 1] // 4)
    pred = {"objectness": out.maps[0], "graspness": out.maps[1],
            "views": out.view_scores[:, q4[0], q4[1]].T,
            "scores": out.scores, "widths": out.widths}
    target = {"objectness": torch.as_tensor(lab.objectness_map, dtype=dt),
              "graspness": torch.as_tensor(lab.graspness_map, dtype=dt),
              "views": torch.as_tensor(lab.view_graspness, dtype=dt),
              "scores": torch.as_tensor(lab.score[n, views], dtype=dt),
              "widths": torch.as_tensor(lab.width[n, views], dtype=dt)}
    t = config.train
    losses = multitask_loss(pred, target, alpha=t.alpha, beta=t.beta, lam=t.lam)
    d_target, d_valid = quarter_disparity_target(lab.disparity_map, lab.objectness_map)
    aux = disparity_loss(out.disparity, torch.as_tensor(d_target, dtype=dt), d_valid)
    return losses, aux, out


def train_tiny(dataset: list[ToyExample], config: PipelineConfig, steps: int | None = None, seed: int | None = None,
               log=None) -> tuple[SpikeGraspNet, list[dict]]:
    """Adam on the multi-task loss plus the disparity term, one example per step.

    The learning rate decays by ``lr_decay`` after every pass over the dataset.
    Returns the trained model and per-step loss rows (evaluated before each update).
    """
    if not dataset:
        raise ValueError("need at least one training scene")
    t = config.train
    steps = t.steps if steps is None else steps
    config = copy.deepcopy(config)
    if seed is not None:
        config.model.init_seed = seed
    torch.manual_seed(config.model.init_seed)
    model = SpikeGraspNet(config)
    opt = torch.optim.Adam(model.parameters(), lr=t.lr)
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=t.lr_decay)
    curve = []
    for step in range(steps):
        ex = dataset[step % len(dataset)]
        losses, aux, _ = example_loss(model, ex, config, iterations=t.iterations, inner_steps=t.inner_steps)
        total = losses.total
        if not torch.isfinite(total) or not torch.isfinite(aux):
            raise DivergenceError(f"non-finite loss at step {step}")
        row = losses.as_floats()
        row["disparity"] = float(aux.detach())
        curve.append(row)
        if log is not None:
            log(step, row)
        opt.zero_grad()
        (total + t.disparity_weight * aux).backward()
        opt.step()
        if (step + 1) % (len(dataset) * t.epoch_passes) == 0:
            sched.step()
    return model, curve
