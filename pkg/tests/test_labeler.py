import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikegrasp.config import GraspConfig, LabelConfig, RigConfig
from spikegrasp.grasp_head import GraspPose
from spikegrasp.labeler import (DegenerateContactError, GraspCandidateSet, GripperModel, NoContactError, SceneLabels,
                                collision_check, collision_free, contact_friction, force_closure, grasp_contacts,
                                grasp_from_world, label_scene, min_friction, normalize_graspness,
                                pointwise_graspness, viewwise_graspness)
from spikegrasp.scene import Lighting, Primitive, SceneDescription, StereoRig, render_mask

RIG = StereoRig.looking_down(RigConfig())
LIGHT = Lighting((0, 0, 1), 0.1, 0.15, 0.75)


def scene_of(*objs):
    return SceneDescription(0, tuple(objs), 0.0, RIG, LIGHT)


def world_frame(approach, closing):
    a = np.asarray(approach, float)
    c = np.asarray(closing, float)
    return np.stack([a, c, np.cross(a, c)], axis=1)


def camera_grasp(R_w, t_w, scene, width=0.05):
    R, t = grasp_from_world(R_w, t_w, scene)
    return GraspPose(R, t, width, 1.0)


DOWN_X = world_frame([0, 0, -1], [1, 0, 0])


# ---------------------------------------------------------------- force closure

def test_antipodal_flat_contacts_close_for_any_mu():
    p1, p2 = np.zeros(3), np.array([0.03, 0, 0])
    n1, n2 = np.array([-1.0, 0, 0]), np.array([1.0, 0, 0])
    for mu in (1e-6, 0.1, 1.0, 10.0):
        assert force_closure(p1, n1, p2, n2, mu)


def test_perpendicular_normal_fails():
    p1, p2 = np.zeros(3), np.array([0.03, 0, 0])
    n1, n2 = np.array([0.0, 1.0, 0]), np.array([1.0, 0, 0])
    assert not force_closure(p1, n1, p2, n2, math.tan(math.radians(89)) * 0.999)
    assert contact_friction(p1, n1, p2, n2) == np.inf


def test_coincident_contacts_degenerate():
    with pytest.raises(DegenerateContactError):
        contact_friction(np.zeros(3), [1, 0, 0], np.zeros(3), [-1, 0, 0])


def sphere_chord_grasp(phi, radius=0.02, center=(0.0, 0.0, 0.02)):
    """Horizontal jaw line through the sphere at angular offset ``phi`` from the diameter."""
    c = np.asarray(center)
    offset = radius * math.sin(phi)
    return DOWN_X, c + np.array([0.0, offset, 0.0])


def test_sphere_diameter_and_chords_closed_form():
    sphere = Primitive("sphere", np.eye(3), [0, 0, 0.02], (0.02,), 0.5)
    scene = scene_of(sphere)
    R, t = sphere_chord_grasp(0.0)
    assert min_friction(camera_grasp(R, t, scene), scene) == pytest.approx(0.0, abs=1e-9)
    for phi in np.linspace(0.02, 1.3, 40):
        R, t = sphere_chord_grasp(phi)
        u = min_friction(camera_grasp(R, t, scene), scene)
        assert abs(u - math.tan(phi)) <= 1e-3
        c = grasp_contacts(camera_grasp(R, t, scene), scene)
        for mu in (0.2, 0.5, 1.0, 2.0):
            fc = force_closure(c.points[0, 0], c.normals[0, 0], c.points[0, 1], c.normals[0, 1], mu)
            assert fc == (math.tan(phi) <= mu) or abs(math.tan(phi) - mu) < 1e-3


def test_box_face_grasp_zero_friction():
    box = Primitive("box", np.eye(3), [0, 0, 0.02], (0.015, 0.02, 0.02), 0.5)
    scene = scene_of(box)
    assert min_friction(camera_grasp(DOWN_X, [0.0, 0.005, 0.02], scene), scene) == pytest.approx(0.0, abs=1e-12)


def test_no_contact_raises():
    scene = scene_of(Primitive("sphere", np.eye(3), [0, 0, 0.02], (0.02,), 0.5))
    with pytest.raises(NoContactError):
        min_friction(camera_grasp(DOWN_X, [0.0, 0.2, 0.02], scene), scene)


def random_grasps(scene, n, rng):
    for _ in range(n):
        obj = scene.objects[rng.integers(len(scene.objects))]
        t = obj.translation + rng.uniform(-0.02, 0.02, 3)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        q *= np.sign(np.linalg.det(q))
        yield camera_grasp(q, t, scene)


def test_min_friction_consistent_with_force_closure():
    rng = np.random.default_rng(0)
    rot = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    rot *= np.sign(np.linalg.det(rot))
    scene = scene_of(Primitive("sphere", np.eye(3), [0.03, 0, 0.02], (0.02,), 0.5),
                     Primitive("box", rot, [-0.03, 0, 0.03], (0.015, 0.02, 0.01), 0.5))
    checked = 0
    for g in random_grasps(scene, 500, rng):
        c = grasp_contacts(g, scene)
        try:
            u = min_friction(g, scene)
        except NoContactError:
            continue
        if not c.valid[0] or c.width[0] <= 1e-9:
            assert u == np.inf
            continue
        for mu in rng.uniform(0.01, 3.0, 5):
            fc = force_closure(c.points[0, 0], c.normals[0, 0], c.points[0, 1], c.normals[0, 1], mu)
            assert (u <= mu) == fc
        checked += 1
    assert checked > 100


# ---------------------------------------------------------------- collision

def oracle_box_distance(p, center, half):
    q = np.abs(p - center) - half
    return np.linalg.norm(np.maximum(q, 0)) + min(q.max(), 0.0)


def test_far_grasp_free_and_palm_in_box_collides():
    box = Primitive("box", np.eye(3), [0, 0, 0.03], (0.03, 0.03, 0.03), 0.5)
    scene = scene_of(box)
    g = GripperModel()
    assert collision_free(DOWN_X, [0, 0, 0.3], 0.05, scene, g)[0] == 1
    # palm center sits 0.04 behind the jaw midpoint along the approach (downward) axis
    assert collision_free(DOWN_X, [0, 0, 0.03 - 0.04], 0.05, scene, g)[0] == 0
    assert collision_check(camera_grasp(DOWN_X, [0, 0, 0.3], scene), scene) == 1


def test_finger_tangent_to_sphere_flips_at_zero_clearance():
    g = GripperModel()
    width = 0.04
    t = np.array([0.0, 0.0, 0.2])
    boxes = g.boxes(width)
    finger_c, finger_h = boxes[0]
    radius = 0.01
    for clearance in [-1e-3, -1e-4, -1e-6, 1e-6, 1e-4, 1e-3]:
        local = finger_c + np.array([0.0, finger_h[1] + radius + clearance, 0.0])
        center_w = t + DOWN_X @ local
        scene = scene_of(Primitive("sphere", np.eye(3), center_w, (radius,), 0.5))
        # analytic: sphere center distance to every gripper box, minus the radius
        sep = min(oracle_box_distance(local, c, h) for c, h in boxes) - radius
        assert np.sign(sep) == np.sign(clearance)
        assert collision_free(DOWN_X, t, width, scene, g)[0] == int(sep > 0)


def test_gripper_below_table_collides():
    scene = scene_of(Primitive("sphere", np.eye(3), [0.2, 0.2, 0.02], (0.02,), 0.5))
    assert collision_free(DOWN_X, [0, 0, 0.003], 0.05, scene, GripperModel())[0] == 0


# ---------------------------------------------------------------- graspness

def double_loop_counts(q, c, thresh):
    N, V, L = q.shape
    point = np.zeros(N)
    view = np.zeros((N, V))
    for i in range(N):
        total = 0
        for j in range(V):
            n = 0
            for k in range(L):
                if q[i, j, k] > thresh and c[i, j, k] == 1:
                    n += 1
            view[i, j] = n / L
            point[i] += n
            total += L
        point[i] /= total
    return point, view


def test_graspness_examples():
    one = GraspCandidateSet(np.array([[[0.9, 0.1]]]), np.array([[[1, 1]]]))
    assert pointwise_graspness(one)[0] == 0.5
    fail = GraspCandidateSet(np.zeros((2, 3, 4)), np.ones((2, 3, 4)))
    assert not pointwise_graspness(fail).any()
    allpass = GraspCandidateSet(np.ones((2, 3, 4)), np.ones((2, 3, 4)))
    assert np.all(pointwise_graspness(allpass) == 1)
    q = np.zeros((1, 4, 3))
    q[0, 2] = 1.0
    v = viewwise_graspness(GraspCandidateSet(q, np.ones_like(q)))
    assert v.tolist() == [[0, 0, 1, 0]]
    uniform = GraspCandidateSet(np.tile([[0.9, 0.1, 0.7]], (2, 5, 1)), np.ones((2, 5, 3)))
    assert np.all(viewwise_graspness(uniform) == viewwise_graspness(uniform)[:, :1])


@given(st.integers(1, 20), st.integers(1, 8), st.integers(1, 16), st.integers(0, 2**31),
       st.floats(0.0, 0.95))
@settings(max_examples=60, deadline=None)
def test_graspness_vs_double_loop(N, V, L, seed, thresh):
    rng = np.random.default_rng(seed)
    q = np.round(rng.uniform(size=(N, V, L)), 2)
    c = rng.integers(0, 2, (N, V, L))
    cand = GraspCandidateSet(q, c)
    point, view = double_loop_counts(q, c, thresh)
    assert np.array_equal(pointwise_graspness(cand, thresh), point)
    assert np.array_equal(viewwise_graspness(cand, thresh), view)
    assert point.min() >= 0 and point.max() <= 1


def test_normalization_examples():
    p, _ = normalize_graspness([0.2, 0.4, 0.6], np.zeros((3, 1)))
    assert np.allclose(p, [0, 0.5, 1])
    p, v = normalize_graspness([0.3, 0.3], np.full((2, 2), 0.1))
    assert not p.any() and not v.any()


@given(st.integers(2, 20), st.integers(1, 8), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_viewwise_normalization_column_oracle(N, V, seed):
    m = np.random.default_rng(seed).uniform(size=(N, V))
    _, got = normalize_graspness(np.zeros(N), m)
    for j in range(V):
        col = m[:, j]
        lo, hi = min(col), max(col)
        for i in range(N):
            expected = (col[i] - lo) / (hi - lo) if hi > lo else 0.0
            assert got[i, j] == expected
    assert got.min() >= 0 and got.max() <= 1


@given(st.integers(0, 2**31), st.floats(0.01, 100), st.floats(-10, 10))
@settings(max_examples=50, deadline=None)
def test_normalization_affine_invariant(seed, a, b):
    rng = np.random.default_rng(seed)
    p, v = rng.uniform(size=7), rng.uniform(size=(7, 3))
    p1, v1 = normalize_graspness(p, v)
    p2, v2 = normalize_graspness(a * p + b, a * v + b)
    assert np.allclose(p1, p2, atol=1e-9) and np.allclose(v1, v2, atol=1e-9)


# ---------------------------------------------------------------- scene labels

@pytest.fixture(scope="module")
def sphere_labels():
    from spikegrasp.scene import single_sphere_scene
    scene = single_sphere_scene(rig=RIG)
    return scene, label_scene(scene, GraspConfig(), LabelConfig())


def test_scene_labels_background_zero(sphere_labels):
    scene, labels = sphere_labels
    mask = render_mask(scene).labels > 0
    assert not labels.graspness_map[~mask].any()
    assert np.array_equal(labels.objectness_map > 0, mask)
    assert labels.graspness_map.min() >= 0 and labels.graspness_map.max() <= 1
    assert labels.score.shape[1:] == (60, 12, 4)
    assert labels.score.max() > 0
    assert np.all((labels.view_graspness >= 0) & (labels.view_graspness <= 1))


def test_scene_labels_roundtrip(sphere_labels, tmp_path):
    _, labels = sphere_labels
    labels.save(tmp_path / "l.npz")
    back = SceneLabels.load(tmp_path / "l.npz")
    for k, v in labels.arrays().items():
        assert np.array_equal(getattr(back, k), v)
    labels.save(tmp_path / "m.npz")
    assert (tmp_path / "l.npz").read_bytes() == (tmp_path / "m.npz").read_bytes()


def test_positive_labels_are_feasible_and_free(sphere_labels):
    scene, labels = sphere_labels
    from spikegrasp.labeler import candidate_poses
    g = GraspConfig()
    R, t = candidate_poses(labels.points_world, scene, g)
    n, v, a, d = np.argwhere(labels.score > 0)[0]
    gripper = GripperModel()
    assert collision_free(R[n, v, a, d], t[n, v, a, d], labels.width[n, v, a, d], scene, gripper)[0] == 1
