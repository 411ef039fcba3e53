"""Grasp benchmark protocol: SE(3) NMS, per-object capping, true positives and AP at friction levels."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import EvalConfig, GraspConfig, LabelConfig
from .grasp_head import GraspPose
from .labeler import GripperModel, collision_free, find_contacts, friction_from_contacts, grasp_to_world
from .scene import SceneDescription


def rotation_distance(R1: np.ndarray, R2: np.ndarray) -> np.ndarray:
    """Geodesic angle between rotations (broadcasts over leading axes)."""
    cos = (np.einsum("...ji,...ji->...", R1, R2) - 1) / 2
    return np.arccos(np.clip(cos, -1.0, 1.0))


def nms_se3(grasps: list[GraspPose], t_thresh: float, r_thresh: float) -> list[GraspPose]:
    """Greedy suppression of grasps close to an already kept one in both translation and rotation.

    Input must be sorted by descending score.
    """
    scores = [g.score for g in grasps]
    if any(a < b for a, b in zip(scores, scores[1:])):
        raise ValueError("grasps must be sorted by descending score")
    kept: list[GraspPose] = []
    if not grasps:
        return kept
    T = np.array([g.translation for g in grasps])
    R = np.array([g.rotation for g in grasps])
    keep_idx: list[int] = []
    for i in range(len(grasps)):
        if keep_idx:
            k = np.array(keep_idx)
            close = ((np.linalg.norm(T[k] - T[i], axis=1) < t_thresh)
                     & (rotation_distance(R[k], R[i][None]) < r_thresh))
            if close.any():
                continue
        keep_idx.append(i)
    return [grasps[i] for i in keep_idx]


def assign_objects(grasps: list[GraspPose], scene: SceneDescription, radius: float) -> np.ndarray:
    """1-based id of the object nearest each jaw midpoint, 0 when farther than ``radius``."""
    if not grasps:
        return np.zeros(0, dtype=np.int64)
    t = scene.camera_rig.camera_to_world(np.array([g.translation for g in grasps]))
    dist, ids = scene.sdf(t)
    return np.where(dist <= radius, ids, 0)


def cap_per_object(grasps: list[GraspPose], ids: np.ndarray, cap: int) -> tuple[list[GraspPose], np.ndarray]:
    """Keep at most ``cap`` grasps per assigned object, in order; unassigned grasps are kept."""
    counts: dict[int, int] = {}
    keep = []
    for i, obj in enumerate(ids):
        obj = int(obj)
        if obj > 0:
            if counts.get(obj, 0) >= cap:
                continue
            counts[obj] = counts.get(obj, 0) + 1
        keep.append(i)
    return [grasps[i] for i in keep], np.asarray(ids)[keep]


@dataclass
class GraspChecks:
    """Friction-independent facts about each grasp of a frame."""

    assigned: np.ndarray
    collision_free: np.ndarray
    min_friction: np.ndarray

    def flags(self, mu: float) -> np.ndarray:
        return ((self.assigned > 0) & (self.collision_free == 1) & (self.min_friction <= mu)).astype(np.uint8)


def check_grasps(grasps: list[GraspPose], scene: SceneDescription, assigned: np.ndarray,
                 grasp_cfg: GraspConfig | None = None, label_cfg: LabelConfig | None = None) -> GraspChecks:
    grasp_cfg = grasp_cfg or GraspConfig()
    gripper = GripperModel.from_config(label_cfg or LabelConfig())
    if not grasps:
        empty = np.zeros(0)
        return GraspChecks(empty.astype(np.int64), empty.astype(np.uint8), empty)
    poses = [grasp_to_world(g.rotation, g.translation, scene) for g in grasps]
    R = np.array([p[0] for p in poses])
    t = np.array([p[1] for p in poses])
    u = friction_from_contacts(find_contacts(R, t, scene, grasp_cfg.max_width))
    free = collision_free(R, t, [g.width for g in grasps], scene, gripper)
    return GraspChecks(np.asarray(assigned), free, u)


def true_positive(grasp: GraspPose, scene: SceneDescription, mu: float, eval_cfg: EvalConfig | None = None,
                  grasp_cfg: GraspConfig | None = None, label_cfg: LabelConfig | None = None) -> int:
    """Assigned to an object, collision-free and force-closed at friction ``mu``."""
    eval_cfg = eval_cfg or EvalConfig()
    ids = assign_objects([grasp], scene, eval_cfg.association_radius)
    return int(check_grasps([grasp], scene, ids, grasp_cfg, label_cfg).flags(mu)[0])


def ap_frame(flags, k_t: int | None = None) -> float:
    """Mean of precision@k for ``k = 1..k_t`` over confidence-ordered binary flags."""
    y = np.asarray(flags, dtype=np.float64)
    k_t = len(y) if k_t is None else min(k_t, len(y))
    if k_t <= 0:
        return 0.0
    y = y[:k_t]
    prec = np.cumsum(y) / np.arange(1, k_t + 1)
    return float(prec.mean())


def evaluate_frame(grasps: list[GraspPose], scene: SceneDescription, eval_cfg: EvalConfig | None = None,
                   grasp_cfg: GraspConfig | None = None, label_cfg: LabelConfig | None = None) -> dict[float, float]:
    """AP at every friction level of the configured set for one frame."""
    eval_cfg = eval_cfg or EvalConfig()
    eval_cfg.validate()
    ordered = sorted(grasps, key=lambda g: -g.score)
    kept = nms_se3(ordered, eval_cfg.nms_translation_thresh, eval_cfg.nms_rotation_thresh)
    ids = assign_objects(kept, scene, eval_cfg.association_radius)
    kept, ids = cap_per_object(kept, ids, eval_cfg.per_obj_cap)
    checks = check_grasps(kept, scene, ids, grasp_cfg, label_cfg)
    k_t = min(eval_cfg.k_cap, len(kept))
    return {float(mu): ap_frame(checks.flags(mu), k_t) for mu in eval_cfg.friction_set}


@dataclass
class EvalReport:
    per_frame: list[dict[float, float]]
    per_mu: dict[float, float]
    ap: float
    ap_04: float | None
    ap_08: float | None
    frame_ids: list[str] = dataclasses.field(default_factory=list)

    def to_csv(self, path: str | Path, eval_cfg: EvalConfig | None = None, config_hash: str = "") -> None:
        eval_cfg = eval_cfg or EvalConfig()
        ids = self.frame_ids or [str(i) for i in range(len(self.per_frame))]
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_hash: {config_hash}\n")
            for key, value in dataclasses.asdict(eval_cfg).items():
                fh.write(f"# {key}: {value}\n")
            writer = csv.writer(fh)
            writer.writerow(["frame", "mu", "AP_mu"])
            for fid, frame in zip(ids, self.per_frame):
                for mu, value in frame.items():
                    writer.writerow([fid, mu, repr(value)])
            writer.writerow([])
            writer.writerow(["summary", "key", "value"])
            for mu, value in self.per_mu.items():
                writer.writerow(["summary", f"AP_{mu}", repr(value)])
            writer.writerow(["summary", "AP", repr(self.ap)])
            writer.writerow(["summary", "AP_0.4", repr(self.ap_04)])
            writer.writerow(["summary", "AP_0.8", repr(self.ap_08)])


def ap_overall(per_frame: list[dict[float, float]], friction_set, frame_ids=None) -> EvalReport:
    if not per_frame:
        raise ValueError("need at least one frame")
    per_mu = {float(mu): float(np.mean([f[float(mu)] for f in per_frame])) for mu in friction_set}
    ap = float(np.mean(list(per_mu.values())))
    return EvalReport(per_frame, per_mu, ap, per_mu.get(0.4), per_mu.get(0.8), list(frame_ids or []))


def read_report_summary(path: str | Path) -> dict[str, float]:
    out = {}
    with open(path) as fh:
        for row in csv.reader(line for line in fh if not line.startswith("#")):
            if row and row[0] == "summary" and row[1] != "key":
                out[row[1]] = float(row[2]) if row[2] != "None" else float("nan")
    return out
