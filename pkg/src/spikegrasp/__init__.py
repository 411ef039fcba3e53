"""Spike-camera stereo grasp detection with a recurrent spiking refinement operator."""

from .config import PipelineConfig, toy_config
from .estimators import SpikeCamera, SpikeGraspDetector
from .evaluator import evaluate_frame, nms_se3
from .grasp_head import GraspPose
from .labeler import label_scene
from .model import SpikeGraspNet
from .pipeline import infer, infer_scene
from .scene import generate_scene, single_sphere_scene
from .spikecam import simulate
from .training import train_tiny

__version__ = "0.1.0"

__all__ = ["PipelineConfig", "toy_config", "SpikeCamera", "SpikeGraspDetector", "evaluate_frame", "nms_se3",
           "GraspPose", "label_scene", "SpikeGraspNet", "infer", "infer_scene", "generate_scene",
           "single_sphere_scene", "simulate", "train_tiny"]
