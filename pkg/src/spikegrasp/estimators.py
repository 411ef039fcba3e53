"""scikit-learn style wrappers around the spike camera and the grasp detector."""

from __future__ import annotations

import copy

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_fitted, check_luminance_sequence, check_scenes
from .config import PipelineConfig, toy_config
from .evaluator import ap_overall, evaluate_frame
from .grasp_head import GraspPose
from .graspable import GraspableMaps
from .model import SpikeGraspNet
from .pipeline import infer_scene
from .spikecam import SpikeStream, network_input, simulate
from .training import build_toy_dataset, make_example, train_tiny


class SpikeCamera(BaseEstimator, TransformerMixin):
    """Integrate-and-fire sensor. ``transform`` maps a luminance sequence to the network input."""

    def __init__(self, theta: float = 0.5 * 4 / 40000.0, readout_rate: float = 40000.0, window: int = 10):
        self.theta = theta
        self.readout_rate = readout_rate
        self.window = window

    def fit(self, X, y=None):
        X = check_luminance_sequence(X)
        if 3 * self.window > X.shape[0]:
            raise ValueError("sequence too short for three windows")
        self.frame_shape_ = X.shape[1:]
        return self

    def simulate(self, X) -> SpikeStream:
        check_fitted(self, "frame_shape_")
        X = check_luminance_sequence(X)
        if X.shape[1:] != self.frame_shape_:
            raise ValueError(f"expected frames of shape {self.frame_shape_}, got {X.shape[1:]}")
        return simulate(list(X), self.theta, self.readout_rate)

    def transform(self, X) -> np.ndarray:
        return network_input(self.simulate(X), self.window)


class SpikeGraspDetector(BaseEstimator):
    """Trains the detector on labelled scenes and predicts grasps for new ones."""

    def __init__(self, steps: int = 200, lr: float = 5e-3, seed: int = 0, iterations: int = 4,
                 inner_steps: int = 4, config: PipelineConfig | None = None):
        self.steps = steps
        self.lr = lr
        self.seed = seed
        self.iterations = iterations
        self.inner_steps = inner_steps
        self.config = config

    def _config(self) -> PipelineConfig:
        cfg = copy.deepcopy(self.config) if self.config is not None else toy_config()
        cfg.train.steps = self.steps
        cfg.train.lr = self.lr
        cfg.train.iterations = cfg.model.iterations = self.iterations
        cfg.train.inner_steps = cfg.model.inner_steps = self.inner_steps
        cfg.model.init_seed = self.seed
        return cfg.validate()

    def fit(self, X=None, y=None):
        """Train on scenes ``X``; ``None`` uses the built-in toy set."""
        cfg = self._config()
        dataset = build_toy_dataset(cfg) if X is None else [make_example(s, cfg) for s in check_scenes(X)]
        self.model_, self.loss_curve_ = train_tiny(dataset, cfg)
        self.config_ = cfg
        return self

    def _infer(self, scene):
        check_fitted(self, "model_")
        return infer_scene(self.model_, check_scenes(scene)[0], self.config_)

    def predict(self, X) -> list[GraspPose] | list[list[GraspPose]]:
        scenes = check_scenes(X)
        out = [self._infer(s).grasps for s in scenes]
        return out[0] if len(out) == 1 and not isinstance(X, (list, tuple)) else out

    def predict_maps(self, X) -> GraspableMaps:
        return self._infer(X).maps

    def score(self, X, y=None) -> float:
        """Overall AP across the configured friction set."""
        scenes = check_scenes(X)
        cfg = self.config_ if hasattr(self, "config_") else self._config()
        frames = [evaluate_frame(self._infer(s).grasps, s, cfg.eval, cfg.grasp, cfg.labels) for s in scenes]
        return ap_overall(frames, cfg.eval.friction_set).ap

    @classmethod
    def from_model(cls, model: SpikeGraspNet, config: PipelineConfig) -> "SpikeGraspDetector":
        est = cls(config=config)
        est.model_, est.config_, est.loss_curve_ = model, config, []
        return est
