"""Procedural tabletop scenes built from analytic primitives.

Scenes live in a world frame with +z up and the table top at
``table_height``. Cameras follow the pinhole convention (x right, y down,
z forward). Rendering is a per-pixel ray cast with Lambertian shading from a
single directional light; the table itself is not drawn, so every non-object
pixel carries the background ambient value.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .config import RigConfig, SceneConfig

log = logging.getLogger(__name__)

SCENE_FORMAT_VERSION = 1
KINDS = ("sphere", "box", "cylinder")
_EPS = 1e-9

Camera = Literal["left", "right"]


class SceneError(ValueError):
    pass


class PlacementError(SceneError):
    pass


@dataclass(frozen=True)
class Primitive:
    """A rigid primitive. ``rotation`` maps local to world coordinates.

    ``size`` holds ``(radius,)`` for spheres, half extents ``(hx, hy, hz)`` for
    boxes and ``(radius, half_height)`` for cylinders (axis = local z).
    """

    kind: str
    rotation: np.ndarray
    translation: np.ndarray
    size: tuple[float, ...]
    albedo: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SceneError(f"unknown primitive kind {self.kind!r}")
        expected = {"sphere": 1, "box": 3, "cylinder": 2}[self.kind]
        if len(self.size) != expected or min(self.size) <= 0:
            raise SceneError(f"{self.kind} needs {expected} positive size parameters")
        if not 0 <= self.albedo <= 1:
            raise SceneError("albedo must lie in [0, 1]")
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @property
    def bounding_radius(self) -> float:
        if self.kind == "sphere":
            return self.size[0]
        if self.kind == "box":
            return float(np.linalg.norm(self.size))
        return float(np.hypot(self.size[0], self.size[1]))

    def to_local(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.translation) @ self.rotation

    def sdf(self, points: np.ndarray) -> np.ndarray:
        """Exact signed distance (negative inside) for world points ``(..., 3)``."""
        p = self.to_local(points)
        if self.kind == "sphere":
            return np.linalg.norm(p, axis=-1) - self.size[0]
        if self.kind == "box":
            q = np.abs(p) - np.asarray(self.size)
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
            return outside + np.minimum(q.max(axis=-1), 0.0)
        r, hh = self.size
        d = np.stack([np.hypot(p[..., 0], p[..., 1]) - r, np.abs(p[..., 2]) - hh], axis=-1)
        return np.minimum(d.max(axis=-1), 0.0) + np.linalg.norm(np.maximum(d, 0.0), axis=-1)

    def lowest_point(self) -> float:
        """World z of the lowest point on the surface."""
        R = self.rotation
        if self.kind == "sphere":
            return float(self.translation[2] - self.size[0])
        if self.kind == "box":
            return float(self.translation[2] - np.abs(R[2]) @ np.asarray(self.size))
        r, hh = self.size
        axis_z = abs(R[2, 2])
        return float(self.translation[2] - hh * axis_z - r * np.sqrt(max(0.0, 1 - axis_z**2)))

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest hit distance along each ray (``inf`` on miss) and world normals."""
        o = self.to_local(origins)
        d = np.asarray(dirs, dtype=np.float64) @ self.rotation
        if self.kind == "sphere":
            t, n = _ray_sphere(o, d, self.size[0])
        elif self.kind == "box":
            t, n = _ray_box(o, d, np.asarray(self.size))
        else:
            t, n = _ray_cylinder(o, d, *self.size)
        return t, n @ self.rotation.T

    def surface_samples(self, spacing: float) -> np.ndarray:
        """Deterministic surface points at roughly ``spacing`` separation (world frame)."""
        if self.kind == "sphere":
            r = self.size[0]
            n = max(16, int(np.ceil(4 * np.pi * r**2 / spacing**2)))
            local = r * fibonacci_sphere(n)
        elif self.kind == "box":
            local = _box_surface_grid(np.asarray(self.size), spacing)
        else:
            local = _cylinder_surface_grid(*self.size, spacing)
        return local @ self.rotation.T + self.translation


def _ray_sphere(o, d, r):
    b = np.einsum("ij,ij->i", o, d)
    a = np.einsum("ij,ij->i", d, d)
    c = np.einsum("ij,ij->i", o, o) - r * r
    disc = b * b - a * c
    t = np.full(len(o), np.inf)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t1 = (-b - sq) / a
    t2 = (-b + sq) / a
    t = np.where(ok & (t1 > _EPS), t1, np.where(ok & (t2 > _EPS), t2, np.inf))
    p = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
    n = p / r
    return t, n


def _ray_box(o, d, h):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-h - o) * inv
        t2 = (h - o) * inv
    t1 = np.where(np.isnan(t1), -np.inf, t1)
    t2 = np.where(np.isnan(t2), np.inf, t2)
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    # rays parallel to a slab and outside it never hit
    parallel_out = (d == 0) & (np.abs(o) > h)
    lo = np.where(parallel_out, np.inf, lo)
    tnear = lo.max(axis=1)
    tfar = hi.min(axis=1)
    hit = (tnear <= tfar) & (tfar > _EPS)
    entering = tnear > _EPS
    t = np.where(hit, np.where(entering, tnear, tfar), np.inf)
    axis = np.where(entering, lo.argmax(axis=1), hi.argmin(axis=1))
    n = np.zeros_like(o)
    rows = np.arange(len(o))
    sign = np.where(entering, -np.sign(d[rows, axis]), np.sign(d[rows, axis]))
    n[rows, axis] = sign
    return t, n


def _ray_cylinder(o, d, r, hh):
    m = len(o)
    cands = np.full((m, 4), np.inf)
    normals = np.zeros((m, 4, 3))
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1]
    c = o[:, 0] ** 2 + o[:, 1] ** 2 - r * r
    disc = b * b - a * c
    ok = (a > 1e-15) & (disc >= 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    safe_a = np.where(ok, a, 1.0)
    for col, root in ((0, (-b - sq) / safe_a), (1, (-b + sq) / safe_a)):
        z = o[:, 2] + root * d[:, 2]
        valid = ok & (root > _EPS) & (np.abs(z) <= hh)
        cands[:, col] = np.where(valid, root, np.inf)
        p = o + np.where(valid, root, 0.0)[:, None] * d
        normals[:, col, 0] = p[:, 0] / r
        normals[:, col, 1] = p[:, 1] / r
    for col, zc in ((2, hh), (3, -hh)):
        with np.errstate(divide="ignore", invalid="ignore"):
            tc = (zc - o[:, 2]) / d[:, 2]
        p = o + np.where(np.isfinite(tc), tc, 0.0)[:, None] * d
        valid = np.isfinite(tc) & (tc > _EPS) & (p[:, 0] ** 2 + p[:, 1] ** 2 <= r * r)
        cands[:, col] = np.where(valid, tc, np.inf)
        normals[:, col, 2] = np.sign(zc)
    best = cands.argmin(axis=1)
    rows = np.arange(m)
    t = cands[rows, best]
    n = normals[rows, best]
    # exit hits (ray starting inside) keep the outward normal
    return t, n


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` near-uniform unit vectors on the sphere (deterministic)."""
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = np.pi * (1 + 5**0.5) * i
    rho = np.sqrt(1 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def _box_surface_grid(h, spacing):
    axes = [np.linspace(-e, e, max(2, int(np.ceil(2 * e / spacing)) + 1)) for e in h]
    pts = []
    for k in range(3):
        others = [j for j in range(3) if j != k]
        u, v = np.meshgrid(axes[others[0]], axes[others[1]], indexing="ij")
        for s in (-1.0, 1.0):
            p = np.zeros((u.size, 3))
            p[:, k] = s * h[k]
            p[:, others[0]] = u.ravel()
            p[:, others[1]] = v.ravel()
            pts.append(p)
    return np.unique(np.concatenate(pts), axis=0)


def _cylinder_surface_grid(r, hh, spacing):
    n_around = max(12, int(np.ceil(2 * np.pi * r / spacing)))
    ang = 2 * np.pi * np.arange(n_around) / n_around
    zs = np.linspace(-hh, hh, max(2, int(np.ceil(2 * hh / spacing)) + 1))
    A, Z = np.meshgrid(ang, zs, indexing="ij")
    side = np.stack([r * np.cos(A).ravel(), r * np.sin(A).ravel(), Z.ravel()], axis=1)
    caps = []
    for rad in np.linspace(0, r, max(2, int(np.ceil(r / spacing)) + 1)):
        k = max(1, int(np.ceil(2 * np.pi * rad / spacing)))
        a = 2 * np.pi * np.arange(k) / k
        ring = np.stack([rad * np.cos(a), rad * np.sin(a)], axis=1)
        for zc in (-hh, hh):
            caps.append(np.column_stack([ring, np.full(k, zc)]))
    return np.concatenate([side, *caps])


@dataclass(frozen=True)
class StereoRig:
    """Rectified stereo pair. ``rotation``/``translation`` place the left camera in the world."""

    focal_length: float
    baseline: float
    resolution: tuple[int, int]
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if self.baseline <= 0:
            raise SceneError("baseline must be positive")
        if self.focal_length <= 0 or min(self.resolution) <= 0:
            raise SceneError("focal length and resolution must be positive")
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))

    @classmethod
    def looking_down(cls, cfg: RigConfig, table_height: float = 0.0) -> "StereoRig":
        # camera x = world x, camera y = -world y, camera z = -world z
        R = np.diag([1.0, -1.0, -1.0])
        t = np.array([-cfg.baseline / 2, 0.0, table_height + cfg.camera_height])
        return cls(cfg.focal_length, cfg.baseline, (cfg.height, cfg.width), R, t)

    @property
    def principal_point(self) -> tuple[float, float]:
        H, W = self.resolution
        return W / 2.0, H / 2.0

    def camera_center(self, camera: Camera = "left") -> np.ndarray:
        if camera == "left":
            return self.translation.copy()
        if camera == "right":
            return self.translation + self.baseline * self.rotation[:, 0]
        raise SceneError(f"unknown camera {camera!r}")

    def world_to_camera(self, points: np.ndarray, camera: Camera = "left") -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.camera_center(camera)) @ self.rotation

    def camera_to_world(self, points: np.ndarray, camera: Camera = "left") -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.camera_center(camera)

    def project(self, points_cam: np.ndarray) -> np.ndarray:
        cx, cy = self.principal_point
        p = np.asarray(points_cam, dtype=np.float64)
        return np.stack([self.focal_length * p[..., 0] / p[..., 2] + cx,
                         self.focal_length * p[..., 1] / p[..., 2] + cy], axis=-1)

    def pixel_rays(self, camera: Camera = "left") -> tuple[np.ndarray, np.ndarray]:
        """World-frame ray origins and unit directions through each pixel center, row-major."""
        H, W = self.resolution
        cx, cy = self.principal_point
        v, u = np.meshgrid(np.arange(H) + 0.5, np.arange(W) + 0.5, indexing="ij")
        d = np.stack([(u - cx) / self.focal_length, (v - cy) / self.focal_length, np.ones_like(u)], axis=-1)
        d = d.reshape(-1, 3)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        dirs = d @ self.rotation.T
        origins = np.broadcast_to(self.camera_center(camera), dirs.shape)
        return np.ascontiguousarray(origins), dirs

    def backproject(self, rows, cols, depth) -> np.ndarray:
        """Camera-frame points for pixel centers at the given z-depth."""
        cx, cy = self.principal_point
        depth = np.asarray(depth, dtype=np.float64)
        x = (np.asarray(cols) + 0.5 - cx) * depth / self.focal_length
        y = (np.asarray(rows) + 0.5 - cy) * depth / self.focal_length
        return np.stack([x, y, depth], axis=-1)

    def to_dict(self) -> dict:
        return {"focal_length": self.focal_length, "baseline": self.baseline,
                "resolution": list(self.resolution), "rotation": self.rotation.tolist(),
                "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StereoRig":
        return cls(d["focal_length"], d["baseline"], tuple(d["resolution"]), d["rotation"], d["translation"])


@dataclass(frozen=True)
class Lighting:
    direction: np.ndarray  # toward the light, stored as given so scene files round-trip exactly
    ambient: float  # background value
    shade_ambient: float
    shade_diffuse: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if not np.isfinite(d).all() or np.linalg.norm(d) == 0:
            raise SceneError("light direction must be a finite nonzero vector")
        object.__setattr__(self, "direction", d)

    @property
    def unit(self) -> np.ndarray:
        return self.direction / np.linalg.norm(self.direction)


@dataclass(frozen=True)
class SceneDescription:
    seed: int
    objects: tuple[Primitive, ...]
    table_height: float
    camera_rig: StereoRig
    lighting: Lighting
    config_hash: str = ""

    @property
    def ids(self) -> list[int]:
        return list(range(1, len(self.objects) + 1))

    def sdf(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Minimum signed distance over objects and the 1-based id of the nearest one."""
        points = np.asarray(points, dtype=np.float64)
        if not self.objects:
            shape = points.shape[:-1]
            return np.full(shape, np.inf), np.zeros(shape, dtype=np.int64)
        d = np.stack([o.sdf(points) for o in self.objects], axis=-1)
        return d.min(axis=-1), d.argmin(axis=-1) + 1


@dataclass
class RayHits:
    ids: np.ndarray  # (N,) 0 = miss
    distance: np.ndarray  # (N,) inf on miss
    points: np.ndarray  # (N, 3) world
    normals: np.ndarray  # (N, 3) world, outward


def cast_rays(objects, origins, dirs) -> RayHits:
    """Nearest-hit ray cast against a list of primitives."""
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    n = len(origins)
    best_t = np.full(n, np.inf)
    ids = np.zeros(n, dtype=np.int64)
    normals = np.zeros((n, 3))
    for k, obj in enumerate(objects, start=1):
        t, nrm = obj.intersect(origins, dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        ids = np.where(closer, k, ids)
        normals = np.where(closer[:, None], nrm, normals)
    pts = origins + np.where(np.isfinite(best_t), best_t, 0.0)[:, None] * dirs
    return RayHits(ids, best_t, pts, normals)


@dataclass(frozen=True)
class LuminanceField:
    values: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise SceneError("luminance must be a 2-D field")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise SceneError("luminance must be finite and non-negative")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ObjectMask:
    labels: np.ndarray


@dataclass
class CameraView:
    """Everything one ray cast of a camera yields: ids, z-depth, world points and normals."""

    mask: np.ndarray
    depth: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    hits: RayHits = field(repr=False, default=None)


def raycast_camera(scene: SceneDescription, camera: Camera = "left") -> CameraView:
    rig = scene.camera_rig
    H, W = rig.resolution
    origins, dirs = rig.pixel_rays(camera)
    hits = cast_rays(scene.objects, origins, dirs)
    cam_pts = rig.world_to_camera(hits.points, camera)
    depth = np.where(hits.ids > 0, cam_pts[:, 2], np.inf)
    return CameraView(hits.ids.reshape(H, W), depth.reshape(H, W),
                      hits.points.reshape(H, W, 3), hits.normals.reshape(H, W, 3), hits)


def render_luminance(scene: SceneDescription, camera: Camera = "left", timestamp: float = 0.0,
                     view: CameraView | None = None) -> LuminanceField:
    view = view or raycast_camera(scene, camera)
    light = scene.lighting
    albedo = np.array([0.0] + [o.albedo for o in scene.objects])[view.mask]
    lambert = np.clip(view.normals @ light.unit, 0.0, None)
    shaded = light.ambient + albedo * (light.shade_ambient + light.shade_diffuse * lambert)
    values = np.where(view.mask > 0, shaded, light.ambient)
    return LuminanceField(values, timestamp)


def render_mask(scene: SceneDescription, camera: Camera = "left", view: CameraView | None = None) -> ObjectMask:
    view = view or raycast_camera(scene, camera)
    return ObjectMask(view.mask.astype(np.int32))


def _random_rotation_z(rng, upright: bool = True):
    yaw = rng.uniform(0, 2 * np.pi)
    c, s = np.cos(yaw), np.sin(yaw)
    Rz = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    if upright:
        return Rz
    # lying on its side: local z axis rotated into the table plane
    Rx = np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0.0]])
    return Rz @ Rx


def _sample_primitive(rng, cfg: SceneConfig, table_height: float) -> Primitive:
    kind = cfg.kinds[rng.integers(len(cfg.kinds))]
    albedo = float(rng.uniform(*cfg.albedo))
    wx, wy = cfg.workspace
    xy = rng.uniform([-wx, -wy], [wx, wy])
    if kind == "sphere":
        r = float(rng.uniform(*cfg.sphere_radius))
        return Primitive(kind, np.eye(3), [xy[0], xy[1], table_height + r], (r,), albedo)
    if kind == "box":
        h = tuple(float(v) for v in rng.uniform(*cfg.box_half_extent, size=3))
        return Primitive(kind, _random_rotation_z(rng), [xy[0], xy[1], table_height + h[2]], h, albedo)
    r = float(rng.uniform(*cfg.cylinder_radius))
    hh = float(rng.uniform(*cfg.cylinder_half_height))
    upright = bool(rng.integers(2))
    R = _random_rotation_z(rng, upright)
    z = table_height + (hh if upright else r)
    return Primitive(kind, R, [xy[0], xy[1], z], (r, hh), albedo)


def min_pair_distance(a: Primitive, b: Primitive, spacing: float = 0.002) -> float:
    """Signed separation of two primitives estimated by surface sampling both ways."""
    return float(min(b.sdf(a.surface_samples(spacing)).min(), a.sdf(b.surface_samples(spacing)).min()))


def generate_scene(seed: int, n_objects: int, config: SceneConfig | None = None,
                   rig: StereoRig | None = None, config_hash: str = "") -> SceneDescription:
    """Seeded random placement of resting primitives without interpenetration.

    Each object gets ``config.retry_budget`` placement attempts. When the
    budget runs out the scene keeps the objects placed so far, unless
    ``config.strict`` is set, in which case :class:`PlacementError` is raised.
    """
    cfg = config or SceneConfig()
    if n_objects < 1:
        raise SceneError("a scene needs at least one object")
    for lo, hi in (cfg.sphere_radius, cfg.box_half_extent, cfg.cylinder_radius, cfg.cylinder_half_height):
        if not 0 < lo <= hi:
            raise SceneError("size ranges must be positive and ordered")
    rng = np.random.default_rng(seed)
    rig = rig or StereoRig.looking_down(RigConfig(), cfg.table_height)
    placed: list[Primitive] = []
    for _ in range(n_objects):
        for _attempt in range(cfg.retry_budget):
            cand = _sample_primitive(rng, cfg, cfg.table_height)
            near = [o for o in placed
                    if np.linalg.norm(o.translation - cand.translation) < o.bounding_radius + cand.bounding_radius]
            if all(min_pair_distance(cand, o) >= -cfg.overlap_tol for o in near):
                placed.append(cand)
                break
        else:
            if cfg.strict:
                raise PlacementError(f"could not place object {len(placed) + 1} within "
                                     f"{cfg.retry_budget} attempts")
            log.warning("placed %d of %d objects before exhausting the retry budget", len(placed), n_objects)
            break
    light_dir = np.asarray(cfg.light_direction, dtype=np.float64)
    light_dir = light_dir + cfg.light_jitter * rng.uniform(-1, 1, size=3) * np.array([1, 1, 0])
    lighting = Lighting(light_dir, cfg.ambient, cfg.shade_ambient, cfg.shade_diffuse)
    return SceneDescription(seed, tuple(placed), cfg.table_height, rig, lighting, config_hash)


def single_sphere_scene(radius: float = 0.02, center_xy=(0.0, 0.0), rig: StereoRig | None = None,
                        config: SceneConfig | None = None, albedo: float = 0.8) -> SceneDescription:
    cfg = config or SceneConfig()
    rig = rig or StereoRig.looking_down(RigConfig(), cfg.table_height)
    sphere = Primitive("sphere", np.eye(3), [center_xy[0], center_xy[1], cfg.table_height + radius],
                       (radius,), albedo)
    lighting = Lighting(cfg.light_direction, cfg.ambient, cfg.shade_ambient, cfg.shade_diffuse)
    return SceneDescription(0, (sphere,), cfg.table_height, rig, lighting)


def scene_to_dict(scene: SceneDescription) -> dict:
    return {
        "format_version": SCENE_FORMAT_VERSION,
        "config_hash": scene.config_hash,
        "seed": scene.seed,
        "table_height": scene.table_height,
        "camera_rig": scene.camera_rig.to_dict(),
        "lighting": {"direction": scene.lighting.direction.tolist(), "ambient": scene.lighting.ambient,
                     "shade_ambient": scene.lighting.shade_ambient,
                     "shade_diffuse": scene.lighting.shade_diffuse},
        "objects": [{"id": i, "kind": o.kind, "rotation": o.rotation.tolist(),
                     "translation": o.translation.tolist(), "size": list(o.size), "albedo": o.albedo}
                    for i, o in enumerate(scene.objects, start=1)],
    }


def scene_from_dict(doc: dict) -> SceneDescription:
    version = doc.get("format_version")
    if version != SCENE_FORMAT_VERSION:
        raise SceneError(f"unsupported scene format_version {version!r}")
    objs = tuple(Primitive(o["kind"], o["rotation"], o["translation"], tuple(o["size"]), o["albedo"])
                 for o in doc["objects"])
    if not objs:
        raise SceneError("scene file contains no objects")
    lt = doc["lighting"]
    lighting = Lighting(lt["direction"], lt["ambient"], lt["shade_ambient"], lt["shade_diffuse"])
    return SceneDescription(doc["seed"], objs, doc["table_height"], StereoRig.from_dict(doc["camera_rig"]),
                            lighting, doc.get("config_hash", ""))


def save_scene(scene: SceneDescription, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")


def load_scene(path: str | Path) -> SceneDescription:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: not a scene file ({exc})") from exc
    return scene_from_dict(doc)
