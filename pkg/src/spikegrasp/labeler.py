"""Ground-truth grasp labels: antipodal contacts, friction, gripper collision and graspness.

Grasp poses are expressed in the left camera frame; scene geometry lives in
the world frame. Conversion uses the scene's stereo rig.
"""

from __future__ import annotations

import io
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import GraspConfig, LabelConfig
from .grasp_head import (GraspPose, angle_bins, approach_views, axis_rotation_x, score_from_friction,
                         view_rotation)
from .scene import SceneDescription, _box_surface_grid, _cylinder_surface_grid, cast_rays, raycast_camera


class DegenerateContactError(ValueError):
    pass


class NoContactError(ValueError):
    """The jaw closing line meets no surface."""


# ---------------------------------------------------------------- friction

def _cone_tan(axis: np.ndarray, inward: np.ndarray) -> np.ndarray:
    """tan of the angle between each force direction and inward normal; inf at or beyond 90 degrees."""
    dot = np.einsum("...i,...i->...", axis, inward)
    cross = np.linalg.norm(np.cross(axis, inward), axis=-1)
    with np.errstate(divide="ignore"):
        return np.where(dot > 0, cross / np.where(dot > 0, dot, 1.0), np.inf)


def contact_friction(p1, n1, p2, n2) -> np.ndarray:
    """Smallest Coulomb coefficient putting both contacts' squeeze forces inside their friction cones.

    ``n1``/``n2`` are outward unit normals; the jaw at ``p1`` pushes toward
    ``p2`` and vice versa. Broadcasts over leading axes.
    """
    p1, n1, p2, n2 = (np.asarray(v, dtype=np.float64) for v in (p1, n1, p2, n2))
    axis = p2 - p1
    length = np.linalg.norm(axis, axis=-1, keepdims=True)
    if np.any(length <= 1e-12):
        raise DegenerateContactError("contact points coincide")
    axis = axis / length
    return np.maximum(_cone_tan(axis, -n1), _cone_tan(-axis, -n2))


def force_closure(p1, n1, p2, n2, mu: float):
    """Antipodal test: each squeeze direction lies inside the friction cone of half-angle ``atan(mu)``.

    Works on angles directly, independently of :func:`contact_friction`.
    """
    if mu <= 0:
        raise ValueError("friction coefficient must be positive")
    p1, n1, p2, n2 = (np.asarray(v, dtype=np.float64) for v in (p1, n1, p2, n2))
    axis = p2 - p1
    length = np.linalg.norm(axis, axis=-1, keepdims=True)
    if np.any(length <= 1e-12):
        raise DegenerateContactError("contact points coincide")
    axis = axis / length
    half_angle = np.arctan(mu)

    def inside(force, outward):
        inward = -outward / np.linalg.norm(outward, axis=-1, keepdims=True)
        cos = np.clip(np.einsum("...i,...i->...", force, inward), -1.0, 1.0)
        return np.arccos(cos) <= half_angle

    result = inside(axis, n1) & inside(-axis, n2)
    return bool(result) if np.ndim(result) == 0 else result


# ---------------------------------------------------------------- frames

def grasp_to_world(rotation, translation, scene: SceneDescription) -> tuple[np.ndarray, np.ndarray]:
    rig = scene.camera_rig
    R = rig.rotation @ np.asarray(rotation, dtype=np.float64)
    t = rig.camera_to_world(np.asarray(translation, dtype=np.float64))
    return R, t


def grasp_from_world(rotation, translation, scene: SceneDescription) -> tuple[np.ndarray, np.ndarray]:
    rig = scene.camera_rig
    R = rig.rotation.T @ np.asarray(rotation, dtype=np.float64)
    t = rig.world_to_camera(np.asarray(translation, dtype=np.float64))
    return R, t


@dataclass
class Contacts:
    """Jaw contacts of a batch of grasps (world frame)."""

    ids: np.ndarray  # (B, 2)
    points: np.ndarray  # (B, 2, 3)
    normals: np.ndarray  # (B, 2, 3)
    travel: np.ndarray  # (B, 2) distance each jaw moves before touching

    @property
    def valid(self) -> np.ndarray:
        return ((self.ids[:, 0] > 0) & (self.ids[:, 0] == self.ids[:, 1])
                & np.isfinite(self.travel).all(axis=1))

    @property
    def width(self) -> np.ndarray:
        return np.linalg.norm(self.points[:, 0] - self.points[:, 1], axis=1)


def find_contacts(R_world: np.ndarray, t_world: np.ndarray, scene: SceneDescription, w_max: float) -> Contacts:
    """Close both jaws from ``t +/- (w_max/2) * closing_axis`` toward the midpoint."""
    R_world = np.asarray(R_world, dtype=np.float64).reshape(-1, 3, 3)
    t_world = np.asarray(t_world, dtype=np.float64).reshape(-1, 3)
    y = R_world[:, :, 1]
    B = len(t_world)
    origins = np.concatenate([t_world + 0.5 * w_max * y, t_world - 0.5 * w_max * y])
    dirs = np.concatenate([-y, y])
    hits = cast_rays(scene.objects, origins, dirs)
    dist = hits.distance.reshape(2, B).T
    ids = hits.ids.reshape(2, B).T
    # jaws that would pass each other never close on a single body
    crossing = dist.sum(axis=1) > w_max
    ids = np.where(crossing[:, None], 0, ids)
    return Contacts(ids, hits.points.reshape(2, B, 3).transpose(1, 0, 2),
                    hits.normals.reshape(2, B, 3).transpose(1, 0, 2), dist)


def friction_from_contacts(c: Contacts) -> np.ndarray:
    u = np.full(len(c.ids), np.inf)
    ok = c.valid & (c.width > 1e-9)
    if ok.any():
        u[ok] = contact_friction(c.points[ok, 0], c.normals[ok, 0], c.points[ok, 1], c.normals[ok, 1])
    return u


def min_friction(grasp: GraspPose, scene: SceneDescription, w_max: float = 0.10) -> float:
    """Minimum friction for force closure of a camera-frame grasp; ``inf`` without a two-contact closure."""
    R, t = grasp_to_world(grasp.rotation, grasp.translation, scene)
    c = find_contacts(R, t, scene, w_max)
    if not np.isfinite(c.travel[0]).any():
        raise NoContactError("jaws meet no surface")
    return float(friction_from_contacts(c)[0])


def grasp_contacts(grasp: GraspPose, scene: SceneDescription, w_max: float = 0.10) -> Contacts:
    R, t = grasp_to_world(grasp.rotation, grasp.translation, scene)
    return find_contacts(R, t, scene, w_max)


# ---------------------------------------------------------------- collision

@dataclass(frozen=True)
class GripperModel:
    """Two finger boxes and a palm box in the grasp frame (x approach, y closing, z height)."""

    finger_size: tuple[float, float, float] = (0.04, 0.01, 0.01)
    palm_size: tuple[float, float, float] = (0.02, 0.08, 0.02)
    finger_tip: float = 0.01
    pitch: float = 0.002

    @classmethod
    def from_config(cls, cfg: LabelConfig) -> "GripperModel":
        return cls(tuple(cfg.finger_size), tuple(cfg.palm_size), cfg.finger_tip, cfg.collision_pitch)

    def boxes(self, width: float) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(center, half_extents)`` of the left finger, right finger and palm."""
        fl, ft, fh = self.finger_size
        pl, pw, ph = self.palm_size
        fx = self.finger_tip - fl / 2
        fy = width / 2 + ft / 2
        half_f = np.array([fl, ft, fh]) / 2
        return [(np.array([fx, fy, 0.0]), half_f), (np.array([fx, -fy, 0.0]), half_f),
                (np.array([self.finger_tip - fl - pl / 2, 0.0, 0.0]), np.array([pl, pw, ph]) / 2)]


def _box_sdf_local(p: np.ndarray, half: np.ndarray) -> np.ndarray:
    q = np.abs(p) - half
    return np.linalg.norm(np.maximum(q, 0.0), axis=-1) + np.minimum(q.max(axis=-1), 0.0)


def _obb_overlap(c1, R1, h1, c2, R2, h2) -> np.ndarray:
    """Separating-axis test for batches of oriented boxes (touching counts as overlap)."""
    c1, R1, c2, R2 = (np.asarray(v, dtype=np.float64) for v in (c1, R1, c2, R2))
    B = np.broadcast_shapes(c1.shape[:-1], c2.shape[:-1])
    axes = [R1[..., :, i] for i in range(3)] + [R2[..., :, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            axes.append(np.cross(R1[..., :, i], R2[..., :, j]))
    d = c2 - c1
    overlap = np.ones(B, dtype=bool)
    for a in axes:
        a = np.broadcast_to(a, (*B, 3))
        norm = np.linalg.norm(a, axis=-1)
        usable = norm > 1e-9
        r1 = sum(h1[k] * np.abs(np.einsum("...i,...i->...", a, R1[..., :, k])) for k in range(3))
        r2 = sum(h2[k] * np.abs(np.einsum("...i,...i->...", a, R2[..., :, k])) for k in range(3))
        sep = np.abs(np.einsum("...i,...i->...", a, d)) > r1 + r2 + 1e-12 * norm
        overlap &= ~(usable & sep)
    return overlap


def collision_free(R_world, t_world, widths, scene: SceneDescription, gripper: GripperModel) -> np.ndarray:
    """Per-grasp flag: 1 when no gripper box touches an object or reaches below the table.

    Spheres and boxes are tested exactly; cylinders by surface sampling at
    the gripper pitch in both directions.
    """
    R_world = np.asarray(R_world, dtype=np.float64).reshape(-1, 3, 3)
    t_world = np.asarray(t_world, dtype=np.float64).reshape(-1, 3)
    widths = np.broadcast_to(np.asarray(widths, dtype=np.float64), (len(t_world),))
    free = np.ones(len(t_world), dtype=bool)
    for box_idx in range(3):
        centers, half = [], None
        for w in widths:
            c, half = gripper.boxes(float(w))[box_idx]
            centers.append(c)
        centers_local = np.array(centers)
        centers_w = t_world + np.einsum("bij,bj->bi", R_world, centers_local)
        # table: lowest corner of each box
        lowest = centers_w[:, 2] - np.abs(R_world[:, 2, :]) @ half
        free &= lowest >= scene.table_height
        extent = float(np.linalg.norm(half))
        for obj in scene.objects:
            near = np.linalg.norm(centers_w - obj.translation, axis=1) <= extent + obj.bounding_radius
            idx = np.flatnonzero(near & free)
            if idx.size == 0:
                continue
            hit = _primitive_hits_box(obj, centers_w[idx], R_world[idx], half, gripper.pitch)
            free[idx[hit]] = False
    return free.astype(np.uint8)


_SAMPLE_CACHE: dict = {}


def _box_samples(half: np.ndarray, pitch: float) -> np.ndarray:
    key = ("box", tuple(np.round(half, 12)), pitch)
    if key not in _SAMPLE_CACHE:
        _SAMPLE_CACHE[key] = _box_surface_grid(half, pitch)
    return _SAMPLE_CACHE[key]


def _primitive_hits_box(obj, centers, rotations, half, pitch) -> np.ndarray:
    local_c = (centers - obj.translation) @ obj.rotation  # box centers in primitive frame
    local_R = np.einsum("ji,bjk->bik", obj.rotation, rotations)
    if obj.kind == "sphere":
        # sphere center in box frame
        p = np.einsum("bji,bj->bi", local_R, -local_c)
        return _box_sdf_local(p, half) < obj.size[0]
    if obj.kind == "box":
        return _obb_overlap(np.zeros(3), np.eye(3), np.asarray(obj.size), local_c, local_R, half)
    r, hh = obj.size
    samples = _box_samples(half, pitch)
    # gripper surface inside the cylinder
    pts = local_c[:, None, :] + np.einsum("bij,pj->bpi", local_R, samples)
    radial = np.hypot(pts[..., 0], pts[..., 1])
    inside = ((radial < r) & (np.abs(pts[..., 2]) < hh)).any(axis=1)
    # cylinder surface (or its center) inside the box
    key = ("cyl", r, hh, pitch)
    if key not in _SAMPLE_CACHE:
        _SAMPLE_CACHE[key] = np.vstack([_cylinder_surface_grid(r, hh, pitch), np.zeros((1, 3))])
    cyl = _SAMPLE_CACHE[key]
    in_box = np.einsum("bji,bpj->bpi", local_R, cyl[None] - local_c[:, None, :])
    inside |= (_box_sdf_local(in_box, half) < 0).any(axis=1)
    return inside


def collision_check(grasp: GraspPose, scene: SceneDescription, gripper: GripperModel | None = None) -> int:
    """1 when the gripper at ``grasp`` (camera frame) is collision-free, else 0."""
    gripper = gripper or GripperModel()
    R, t = grasp_to_world(grasp.rotation, grasp.translation, scene)
    return int(collision_free(R, t, [grasp.width], scene, gripper)[0])


# ---------------------------------------------------------------- graspness

@dataclass
class GraspCandidateSet:
    """Candidates per (point, view): ``L = A * D`` grasps laid out angle-major."""

    quality: np.ndarray  # (N, V, L) in [0, 1]
    collision_free: np.ndarray  # (N, V, L) in {0, 1}
    width: np.ndarray | None = None
    friction: np.ndarray | None = None

    def __post_init__(self):
        self.quality = np.asarray(self.quality, dtype=np.float64)
        self.collision_free = np.asarray(self.collision_free).astype(np.uint8)
        if self.quality.shape != self.collision_free.shape or self.quality.ndim != 3:
            raise ValueError("quality and collision flags must share an (N, V, L) shape")
        if np.any((self.quality < 0) | (self.quality > 1)):
            raise ValueError("qualities must lie in [0, 1]")
        if np.any(self.collision_free > 1):
            raise ValueError("collision flags must be binary")


def _passing(candidates: GraspCandidateSet, c_thresh: float) -> np.ndarray:
    return (candidates.quality > c_thresh) & (candidates.collision_free == 1)


def pointwise_graspness(candidates: GraspCandidateSet, c_thresh: float = 0.5) -> np.ndarray:
    n_pass = _passing(candidates, c_thresh).sum(axis=(1, 2))
    total = candidates.quality.shape[1] * candidates.quality.shape[2]
    return n_pass / total if total else np.zeros(candidates.quality.shape[0])


def viewwise_graspness(candidates: GraspCandidateSet, c_thresh: float = 0.5) -> np.ndarray:
    n_pass = _passing(candidates, c_thresh).sum(axis=2)
    L = candidates.quality.shape[2]
    return n_pass / L if L else np.zeros(candidates.quality.shape[:2])


def _minmax(x: np.ndarray, axis) -> np.ndarray:
    lo = x.min(axis=axis, keepdims=True)
    hi = x.max(axis=axis, keepdims=True)
    span = hi - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(span > 0, (x - lo) / np.where(span > 0, span, 1.0), 0.0)
    return np.clip(out, 0.0, 1.0)


def normalize_graspness(point_scores, view_scores) -> tuple[np.ndarray, np.ndarray]:
    """Min-max over the scene for points and per view column for views; flat slices map to 0."""
    p = np.asarray(point_scores, dtype=np.float64)
    v = np.asarray(view_scores, dtype=np.float64)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
        raise ValueError("graspness inputs must be finite")
    return (_minmax(p, None) if p.size else p), (_minmax(v, 0) if v.size else v)


# ---------------------------------------------------------------- scene labels

def candidate_poses(points_world: np.ndarray, scene: SceneDescription, grasp_cfg: GraspConfig):
    """World-frame rotations/translations of every candidate, shape ``(N, V, A, D, ...)``."""
    views = approach_views(grasp_cfg.views)
    angles = angle_bins(grasp_cfg.angles)
    depths = np.asarray(grasp_cfg.depths)
    R_cam = np.array([[view_rotation(v) @ axis_rotation_x(a) for a in angles] for v in views])  # (V, A, 3, 3)
    R_w = np.einsum("ij,vajk->vaik", scene.camera_rig.rotation, R_cam)
    approach_w = R_w[..., :, 0]  # (V, A, 3)
    t_w = (points_world[:, None, None, None, :]
           + depths[None, None, None, :, None] * approach_w[None, :, :, None, :])  # (N, V, A, D, 3)
    R_full = np.broadcast_to(R_w[None, :, :, None], (len(points_world), *R_w.shape[:2], len(depths), 3, 3))
    return R_full, t_w


def generate_candidates(points_world: np.ndarray, scene: SceneDescription, grasp_cfg: GraspConfig,
                        label_cfg: LabelConfig) -> GraspCandidateSet:
    """Quality, collision flag, width label and friction for all ``N * V * A * D`` candidates.

    Collision is only evaluated for force-closure-feasible candidates
    (``u <= u_max``); infeasible ones carry flag 0 and quality 0.
    """
    N = len(points_world)
    V, A, D = grasp_cfg.views, grasp_cfg.angles, len(grasp_cfg.depths)
    R_w, t_w = candidate_poses(points_world, scene, grasp_cfg)
    R_flat = R_w.reshape(-1, 3, 3)
    t_flat = t_w.reshape(-1, 3)
    contacts = find_contacts(R_flat, t_flat, scene, grasp_cfg.max_width)
    u = friction_from_contacts(contacts)
    feasible = u <= grasp_cfg.u_max
    width = np.clip(contacts.width + label_cfg.width_margin, 0.0, grasp_cfg.max_width)
    width = np.where(feasible, width, 0.0)
    free = np.zeros(len(u), dtype=np.uint8)
    idx = np.flatnonzero(feasible)
    gripper = GripperModel.from_config(label_cfg)
    for start in range(0, idx.size, 2048):
        sl = idx[start:start + 2048]
        free[sl] = collision_free(R_flat[sl], t_flat[sl], width[sl], scene, gripper)
    q = np.zeros(len(u))
    q[feasible] = score_from_friction(np.maximum(u[feasible], grasp_cfg.u_min), grasp_cfg.u_min, grasp_cfg.u_max)
    shape = (N, V, A * D)
    return GraspCandidateSet(q.reshape(shape), free.reshape(shape), width.reshape(shape), u.reshape(shape))


@dataclass
class SceneLabels:
    pixels: np.ndarray  # (N, 2) row, col of labeled points (left camera)
    points_world: np.ndarray  # (N, 3)
    point_graspness: np.ndarray  # (N,) normalized
    view_graspness: np.ndarray  # (N, V) normalized
    score: np.ndarray  # (N, V, A, D) quality times collision-free flag
    width: np.ndarray  # (N, V, A, D)
    objectness_map: np.ndarray  # (H, W) {0, 1}
    graspness_map: np.ndarray  # (H, W)
    disparity_map: np.ndarray  # (H, W) pixels, 0 on background
    candidates: GraspCandidateSet | None = None

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in ("pixels", "points_world", "point_graspness", "view_graspness",
                                              "score", "width", "objectness_map", "graspness_map",
                                              "disparity_map")}

    def save(self, path: str | Path, config_hash: str = "") -> None:
        """npz archive with fixed member timestamps so reruns are byte-identical."""
        arrays = self.arrays()
        arrays["config_hash"] = np.array(config_hash)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            for name, arr in arrays.items():
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.require(arr, requirements="C"), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue(),
                            compress_type=zipfile.ZIP_DEFLATED)

    @classmethod
    def load(cls, path: str | Path) -> "SceneLabels":
        with np.load(path) as z:
            return cls(**{k: z[k] for k in z.files if k != "config_hash"})


def label_points(mask: np.ndarray, n_points: int) -> np.ndarray:
    """Evenly spaced object pixels in row-major order, ``(n, 2)``."""
    flat = np.flatnonzero(np.asarray(mask).ravel() > 0)
    if flat.size == 0:
        raise ValueError("scene has no visible object pixels")
    pick = flat[np.unique(np.linspace(0, flat.size - 1, min(n_points, flat.size)).round().astype(int))]
    return np.stack(np.divmod(pick, mask.shape[1]), axis=1)


def label_scene(scene: SceneDescription, grasp_cfg: GraspConfig | None = None,
                label_cfg: LabelConfig | None = None) -> SceneLabels:
    grasp_cfg = grasp_cfg or GraspConfig()
    label_cfg = label_cfg or LabelConfig()
    view = raycast_camera(scene, "left")
    pix = label_points(view.mask, label_cfg.points)
    pts = view.points[pix[:, 0], pix[:, 1]]
    cands = generate_candidates(pts, scene, grasp_cfg, label_cfg)
    sp, sv = normalize_graspness(pointwise_graspness(cands, label_cfg.quality_thresh),
                                 viewwise_graspness(cands, label_cfg.quality_thresh))
    obj = (view.mask > 0).astype(np.float64)
    # nearest labeled point transfers its graspness to every object pixel
    rows, cols = np.nonzero(view.mask > 0)
    d2 = ((view.points[rows, cols][:, None, :] - pts[None]) ** 2).sum(-1)
    gmap = np.zeros_like(obj)
    gmap[rows, cols] = sp[d2.argmin(axis=1)]
    rig = scene.camera_rig
    disp = np.where(view.mask > 0, rig.focal_length * rig.baseline / np.where(view.mask > 0, view.depth, 1.0), 0.0)
    A, D = grasp_cfg.angles, len(grasp_cfg.depths)
    shape = (len(pts), grasp_cfg.views, A, D)
    score = (cands.quality * cands.collision_free).reshape(shape)
    return SceneLabels(pix, pts, sp, sv, score, cands.width.reshape(shape), obj, gmap, disp, cands)


def candidate_summary(labels: SceneLabels) -> str:
    """Human-readable per-point summary of the candidate set."""
    c = labels.candidates
    lines = ["# point row col graspness n_feasible n_collision_free n_positive best_view"]
    for i, (r, col) in enumerate(labels.pixels):
        feas = int(np.isfinite(c.friction[i]).sum()) if c is not None and c.friction is not None else -1
        free = int(c.collision_free[i].sum()) if c is not None else -1
        pos = int((labels.score[i] > 0).sum())
        lines.append(f"{i} {r} {col} {labels.point_graspness[i]:.6f} {feas} {free} {pos} "
                     f"{int(np.argmax(labels.view_graspness[i]))}")
    return "\n".join(lines) + "\n"


def save_label_summary(labels: SceneLabels, path: str | Path, config_hash: str = "") -> None:
    Path(path).write_text(f"# config_hash: {config_hash}\n" + candidate_summary(labels))

