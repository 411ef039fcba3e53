"""The full detector: stereo spike input to maps, view scores and per-seed grasp grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .config import CameraConfig, PipelineConfig
from .grasp_head import GraspHead, SetEncoder, approach_views, crop_cylinder, rotation_from_params
from .graspable import GraspableDecoder
from .pathway import FeatureExtractor, build_pyramid, correlate, lookup, seeded_init_, soft_argmax_disparity
from .rsnn import ALIFParams, HiddenStateField, UpdateModule, update_iteration
from .scene import SceneDescription, render_luminance
from .spikecam import SpikeStream, network_input, simulate, static_sequence

MIN_DISPARITY = 0.25  # quarter-resolution pixels


def simulate_stereo(scene: SceneDescription, camera: CameraConfig) -> tuple[SpikeStream, SpikeStream]:
    streams = []
    for cam in ("left", "right"):
        lum = render_luminance(scene, cam)
        streams.append(simulate(static_sequence(lum, camera.frames), camera.theta, camera.readout_rate,
                                camera=cam))
    return streams[0], streams[1]


def stereo_inputs(scene: SceneDescription, camera: CameraConfig) -> tuple[np.ndarray, np.ndarray]:
    left, right = simulate_stereo(scene, camera)
    return network_input(left, camera.window), network_input(right, camera.window)


@dataclass
class ModelOutput:
    disparity: Tensor  # (H/4, W/4) quarter-resolution pixels
    hidden: Tensor  # (C, H/4, W/4)
    maps: Tensor  # (2, H, W) objectness, graspness
    map_logits: Tensor
    view_scores: Tensor  # (V, H/4, W/4)
    points: Tensor  # (H/4 * W/4, 3) back-projected cell centers, camera frame
    scores: Tensor | None = None  # (M, A, D)
    widths: Tensor | None = None
    seed_points: Tensor | None = None
    deltas: list = field(default_factory=list)


class SpikeGraspNet(nn.Module):
    def __init__(self, config: PipelineConfig):
        super().__init__()
        m, g, r = config.model, config.grasp, config.rig
        self.config = config
        in_ch = 3 * config.camera.window
        self.extractor = FeatureExtractor(in_ch, m.feature_channels, m.stem_channels, init_seed=m.init_seed)
        self.context = nn.Conv2d(m.feature_channels, m.feature_channels, 1)
        seeded_init_(self.context, torch.Generator().manual_seed(m.init_seed + 1))
        corr_ch = m.corr_levels * (2 * m.corr_radius + 1)
        params = ALIFParams(m.tau_m, m.tau_adp, m.v_threshold, m.adapt_beta, m.surrogate_width)
        self.update = UpdateModule(m.hidden_channels + corr_ch + m.feature_channels, m.hidden_channels,
                                   m.rsnn_channels, params, m.tau_out, m.delta_scale, init_seed=m.init_seed + 2)
        self.decoder = GraspableDecoder(m.hidden_channels, tuple(m.decoder_channels), g.views,
                                        init_seed=m.init_seed + 3)
        self.encoder = SetEncoder(3 + m.hidden_channels, m.encoder_width, init_seed=m.init_seed + 4)
        self.head = GraspHead(m.encoder_width, g.angles, len(g.depths), init_seed=m.init_seed + 5)
        self.views = approach_views(g.views)
        self.focal_length = r.focal_length
        self.baseline = r.baseline
        self.resolution = (r.height, r.width)

    @property
    def dtype(self):
        return self.context.weight.dtype

    def backproject_cells(self, disparity: Tensor) -> Tensor:
        """Camera-frame points of every quarter-resolution cell center."""
        Hq, Wq = disparity.shape
        H, W = self.resolution
        f = self.focal_length
        rows = torch.arange(Hq, dtype=disparity.dtype) * 4 + 2.0
        cols = torch.arange(Wq, dtype=disparity.dtype) * 4 + 2.0
        z = f * self.baseline / (4 * disparity.clamp(min=MIN_DISPARITY))
        x = (cols[None, :] - W / 2) * z / f
        y = (rows[:, None] - H / 2) * z / f
        return torch.stack([x, y, z], dim=-1).reshape(-1, 3)

    def forward(self, left, right, seed_pixels=None, seed_views=None, iterations: int | None = None,
                inner_steps: int | None = None, mode: str = "surrogate", recorder=None) -> ModelOutput:
        m, g = self.config.model, self.config.grasp
        iterations = m.iterations if iterations is None else iterations
        inner_steps = m.inner_steps if inner_steps is None else inner_steps
        left = torch.as_tensor(np.asarray(left)).to(self.dtype)
        right = torch.as_tensor(np.asarray(right)).to(self.dtype)
        f_l = self.extractor(left)[4]
        f_r = self.extractor(right)[4]
        ctx = F.relu(self.context(f_l[None]))[0]
        norm = f_l.shape[0] ** 0.25
        volume = correlate(f_l / norm, f_r / norm)
        pyramid = build_pyramid(volume, m.corr_levels)
        disp0 = soft_argmax_disparity(volume)
        Hq, Wq = disp0.shape
        h = torch.cat([disp0[None], torch.zeros((m.hidden_channels - 1, Hq, Wq), dtype=self.dtype)])
        state = HiddenStateField(h, 0)
        cols = torch.arange(Wq, dtype=self.dtype)[None, :].expand(Hq, Wq)
        deltas = []
        for _ in range(iterations):
            corr = lookup(pyramid, cols - state.h[0], m.corr_radius)
            state, delta = update_iteration(state, corr, ctx, self.update, inner_steps, mode, recorder)
            deltas.append(delta)
        h = state.h
        logits = self.decoder.logits(h)
        out = ModelOutput(h[0], h, torch.sigmoid(logits), logits, self.decoder.view_scores(h),
                          self.backproject_cells(h[0]), deltas=deltas)
        if seed_pixels is not None:
            out.scores, out.widths, out.seed_points = self.grasp_grids(out, seed_pixels, seed_views)
        return out

    def seed_points(self, out: ModelOutput, seed_pixels) -> Tensor:
        pix = np.asarray(seed_pixels, dtype=np.int64).reshape(-1, 2)
        H, W = self.resolution
        f = self.focal_length
        d = out.disparity[pix[:, 0] // 4, pix[:, 1] // 4]
        z = f * self.baseline / (4 * d.clamp(min=MIN_DISPARITY))
        rows = torch.as_tensor(pix[:, 0], dtype=self.dtype) + 0.5
        cols = torch.as_tensor(pix[:, 1], dtype=self.dtype) + 0.5
        return torch.stack([(cols - W / 2) * z / f, (rows - H / 2) * z / f, z], dim=-1)

    def grasp_grids(self, out: ModelOutput, seed_pixels, seed_views) -> tuple[Tensor, Tensor, Tensor]:
        g = self.config.grasp
        seeds = self.seed_points(out, seed_pixels)
        feats = out.hidden.reshape(out.hidden.shape[0], -1).T
        crops = []
        for p, view in zip(seeds, np.asarray(seed_views, dtype=np.int64).reshape(-1)):
            R = rotation_from_params(int(view), 0.0, self.views)
            crops.append(crop_cylinder(p, R, out.points, feats, g.crop_height, g.crop_radius, g.crop_samples))
        encoded = self.encoder(torch.stack(crops))
        scores, widths = self.head(encoded)
        return scores, widths, seeds
