import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikegrasp.config import RigConfig, SceneConfig
from spikegrasp.scene import (Lighting, Primitive, SceneDescription, SceneError, StereoRig, generate_scene,
                              load_scene, raycast_camera, render_luminance, render_mask, save_scene,
                              single_sphere_scene)

RIG = StereoRig.looking_down(RigConfig())


def oracle_sdf(prim, pts):
    """Signed distance written out per kind, independent of the library's primitive code."""
    local = (pts - prim.translation) @ prim.rotation
    if prim.kind == "sphere":
        return np.sqrt((local**2).sum(1)) - prim.size[0]
    if prim.kind == "box":
        out = []
        for p in local:
            q = [abs(p[i]) - prim.size[i] for i in range(3)]
            outside = np.sqrt(sum(max(v, 0.0) ** 2 for v in q))
            out.append(outside + min(max(q), 0.0))
        return np.array(out)
    r, hh = prim.size
    out = []
    for p in local:
        radial, axial = np.hypot(p[0], p[1]) - r, abs(p[2]) - hh
        out.append(min(max(radial, axial), 0.0) + np.hypot(max(radial, 0.0), max(axial, 0.0)))
    return np.array(out)


def oracle_surface(prim, n, rng):
    """Random points on the primitive's surface from its own parametrization."""
    if prim.kind == "sphere":
        v = rng.normal(size=(n, 3))
        local = prim.size[0] * v / np.linalg.norm(v, axis=1, keepdims=True)
    elif prim.kind == "box":
        h = np.asarray(prim.size)
        local = rng.uniform(-1, 1, size=(n, 3)) * h
        axis = rng.integers(0, 3, n)
        local[np.arange(n), axis] = np.sign(rng.uniform(-1, 1, n)) * h[axis]
    else:
        r, hh = prim.size
        phi = rng.uniform(0, 2 * np.pi, n)
        side = rng.uniform(size=n) < 0.6
        rad = np.where(side, r, r * np.sqrt(rng.uniform(size=n)))
        z = np.where(side, rng.uniform(-hh, hh, n), np.sign(rng.uniform(-1, 1, n)) * hh)
        local = np.stack([rad * np.cos(phi), rad * np.sin(phi), z], axis=1)
    return local @ prim.rotation.T + prim.translation


def test_zero_objects_rejected():
    with pytest.raises(SceneError):
        generate_scene(7, 0)


def test_same_seed_same_scene(tmp_path):
    a, b = generate_scene(7, 3), generate_scene(7, 3)
    save_scene(a, tmp_path / "a.json")
    save_scene(b, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert np.array_equal(render_luminance(a).values, render_luminance(b).values)


def test_no_interpenetration_dense_oracle():
    scene = generate_scene(7, 3)
    tol = SceneConfig().overlap_tol
    rng = np.random.default_rng(0)
    objs = scene.objects
    for i in range(len(objs)):
        for j in range(len(objs)):
            if i != j:
                d = oracle_sdf(objs[j], oracle_surface(objs[i], 4000, rng))
                assert d.min() >= -tol - 5e-4


@given(st.integers(0, 10_000), st.integers(1, 4))
@settings(max_examples=15, deadline=None)
def test_objects_rest_on_table(seed, n):
    scene = generate_scene(seed, n)
    for o in scene.objects:
        assert o.lowest_point() >= scene.table_height - 1e-9
    assert 1 <= len(scene.objects) <= n


def test_scene_file_roundtrip(tmp_path):
    scene = generate_scene(3, 2)
    save_scene(scene, tmp_path / "s.json")
    back = load_scene(tmp_path / "s.json")
    assert np.array_equal(render_luminance(scene).values, render_luminance(back).values)


def test_empty_view_is_ambient():
    far = Primitive("sphere", np.eye(3), [5.0, 5.0, 0.02], (0.02,), 0.5)
    light = Lighting((0, 0, 1), 0.1, 0.15, 0.75)
    scene = SceneDescription(0, (far,), 0.0, RIG, light)
    assert np.all(render_luminance(scene).values == 0.1)
    assert not render_mask(scene).labels.any()


def test_brightest_pixel_faces_light():
    scene = single_sphere_scene(rig=RIG)
    view = raycast_camera(scene)
    lum = render_luminance(scene, view=view).values
    r, c = np.unravel_index(np.argmax(lum), lum.shape)
    normal_dot = view.normals[r, c] @ scene.lighting.unit
    on_obj = view.mask > 0
    assert normal_dot >= (view.normals[on_obj] @ scene.lighting.unit).max() - 1e-12


def test_mask_matches_shaded_pixels():
    scene = single_sphere_scene(rig=RIG)
    lum = render_luminance(scene).values
    mask = render_mask(scene).labels
    assert np.array_equal(mask > 0, lum > scene.lighting.ambient)


@pytest.mark.parametrize("x", [-0.02, 0.0, 0.015])
def test_stereo_centroid_disparity(x):
    scene = single_sphere_scene(center_xy=(x, 0.01), rig=RIG)
    left = render_mask(scene, "left").labels > 0
    right = render_mask(scene, "right").labels > 0
    shift = np.nonzero(left)[1].mean() - np.nonzero(right)[1].mean()
    depth = RIG.world_to_camera(scene.objects[0].translation)[2]
    assert abs(shift - RIG.focal_length * RIG.baseline / depth) <= 1.0


def test_nearer_object_wins_occlusion():
    box = Primitive("box", np.eye(3), [0.0, 0.0, 0.015], (0.025, 0.025, 0.015), 0.5)
    ball = Primitive("sphere", np.eye(3), [0.01, 0.0, 0.045], (0.015,), 0.7)
    light = Lighting((0, 0, 1), 0.1, 0.15, 0.75)
    scene = SceneDescription(0, (box, ball), 0.0, RIG, light)
    depths = []
    for o in (box, ball):
        single = SceneDescription(0, (o,), 0.0, RIG, light)
        depths.append(raycast_camera(single).depth)
    d = np.stack(depths)
    expected = np.where(np.isfinite(d).any(0), d.argmin(0) + 1, 0)
    mask = render_mask(scene).labels
    assert ((mask == 1) & (expected == 2)).sum() == 0
    assert np.array_equal(mask, expected)
    assert (mask == 2).any() and (mask == 1).any()


def test_mask_ids_refer_to_objects():
    scene = generate_scene(11, 3)
    ids = set(np.unique(render_mask(scene).labels)) - {0}
    assert ids <= set(scene.ids)


def test_luminance_nonnegative_finite():
    lum = render_luminance(generate_scene(5, 3), "right").values
    assert np.all(np.isfinite(lum)) and lum.min() >= 0
