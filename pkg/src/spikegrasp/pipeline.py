"""Inference: scene to grasp list, maps and operation trace."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .config import PipelineConfig
from .costmeter import OpRecorder
from .grasp_head import GraspPose, select_best
from .graspable import EmptySeedError, GraspableMaps, SeedSet, select_seeds
from .model import ModelOutput, SpikeGraspNet, stereo_inputs
from .scene import SceneDescription


@dataclass
class InferenceResult:
    grasps: list[GraspPose]
    maps: GraspableMaps
    seeds: SeedSet
    disparity: np.ndarray  # quarter resolution
    recorder: OpRecorder
    output: ModelOutput


def depth_proxy(model: SpikeGraspNet, disparity: torch.Tensor) -> np.ndarray:
    """Camera-frame point for every full-resolution pixel from its cell's disparity."""
    H, W = model.resolution
    rows, cols = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    pts = model.seed_points(ModelOutput(disparity, None, None, None, None, None),
                            np.stack([rows.ravel(), cols.ravel()], axis=1))
    return pts.detach().double().numpy().reshape(H, W, 3)


def infer(model: SpikeGraspNet, left: np.ndarray, right: np.ndarray, config: PipelineConfig) -> InferenceResult:
    """Grasps for one stereo pair; a frame where no pixel looks like an object yields no grasps."""
    g = config.grasp
    recorder = OpRecorder()
    model.eval()
    with torch.no_grad():
        out = model(left, right, mode="exact", recorder=recorder)
        maps = GraspableMaps(out.maps[0].double().numpy(), out.maps[1].double().numpy())
        H, W = model.resolution
        views_full = torch.nn.functional.interpolate(out.view_scores[None], size=(H, W), mode="nearest")[0]
        try:
            seeds = select_seeds(maps, depth_proxy(model, out.disparity), g.obj_thresh, g.top_m,
                                 views_full.double().numpy(), g.views)
        except EmptySeedError:
            return InferenceResult([], maps, SeedSet(()), out.disparity.double().numpy(), recorder, out)
        scores, widths, points = model.grasp_grids(out, seeds.pixels, seeds.views)
    grasps = select_best(scores.double().numpy(), widths.clamp(0, g.max_width).double().numpy(),
                         points.double().numpy(), seeds.views, model.views, g.depths, g.max_width)
    return InferenceResult(grasps, maps, seeds, out.disparity.double().numpy(), recorder, out)


def infer_scene(model: SpikeGraspNet, scene: SceneDescription, config: PipelineConfig) -> InferenceResult:
    left, right = stereo_inputs(scene, config.camera)
    return infer(model, left, right, config)
