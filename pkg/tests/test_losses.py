import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from spikegrasp.losses import (OBJ_EPS, LossBreakdown, grad_check, masked_smooth_l1, multitask_loss, relative_error,
                               smooth_l1)
from spikegrasp.model import SpikeGraspNet
from spikegrasp.training import example_loss, train_tiny

dt = torch.float64


def scalar_smooth_l1(x: float) -> float:
    return 0.5 * x * x if abs(x) < 1 else abs(x) - 0.5


def random_instance(rng, H=8, W=8, M=5, V=6, A=3, D=4):
    pred = {"objectness": torch.tensor(rng.uniform(0.05, 0.95, (H, W))),
            "graspness": torch.tensor(rng.normal(0, 1.5, (H, W))),
            "views": torch.tensor(rng.normal(0, 1.5, (M, V))),
            "scores": torch.tensor(rng.normal(0, 1.5, (M, A, D))),
            "widths": torch.tensor(rng.normal(0, 1.5, (M, A, D)))}
    labels = {"objectness": torch.tensor((rng.random((H, W)) > 0.5).astype(float)),
              "graspness": torch.tensor(rng.random((H, W))),
              "views": torch.tensor(rng.random((M, V))),
              "scores": torch.tensor(np.where(rng.random((M, A, D)) > 0.5, rng.random((M, A, D)), 0.0)),
              "widths": torch.tensor(rng.random((M, A, D)) * 0.1)}
    return pred, labels


def test_smooth_l1_matches_scalar_oracle(rng):
    x = rng.normal(0, 2, 200)
    got = smooth_l1(torch.tensor(x)).numpy()
    want = np.array([scalar_smooth_l1(v) for v in x])
    assert np.abs(got - want).max() <= 1e-7


def test_components_match_hand_computation(rng):
    pred, labels = random_instance(rng)
    out = multitask_loss(pred, labels)
    obj = labels["objectness"].numpy() > 0.5
    diff_p = (pred["graspness"] - labels["graspness"]).numpy()[obj]
    assert float(out.L_p) == pytest.approx(np.mean([scalar_smooth_l1(v) for v in diff_p]), abs=1e-7)
    diff_v = (pred["views"] - labels["views"]).numpy().ravel()
    assert float(out.L_v) == pytest.approx(np.mean([scalar_smooth_l1(v) for v in diff_v]), abs=1e-7)
    pos = labels["scores"].numpy() > 0
    diff_w = (pred["widths"] - labels["widths"]).numpy()[pos]
    assert float(out.L_w) == pytest.approx(np.mean([scalar_smooth_l1(v) for v in diff_w]), abs=1e-7)
    p, t = pred["objectness"].numpy(), labels["objectness"].numpy()
    ce = -np.mean(t * np.log(p) + (1 - t) * np.log(1 - p))
    assert float(out.L_obj) == pytest.approx(ce, abs=1e-7)


def test_perfect_prediction_hits_floor(rng):
    _, labels = random_instance(rng)
    pred = {k: v.clone() for k, v in labels.items()}
    out = multitask_loss(pred, labels)
    for k in ("L_p", "L_v", "L_s", "L_w"):
        assert float(getattr(out, k)) == 0.0
    assert float(out.L_obj) == pytest.approx(-math.log(1 - OBJ_EPS), rel=1e-6)


def test_zero_task_weights_leave_objectness(rng):
    pred, labels = random_instance(rng)
    out = multitask_loss(pred, labels, alpha=0.0, beta=0.0)
    assert float(out.total) == float(out.L_obj)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_total_is_linear_in_weights(alpha, beta, lam):
    comps = [torch.tensor(v, dtype=dt) for v in (0.7, 0.3, 1.1, 0.25, 0.05)]
    got = float(LossBreakdown(*comps, alpha=alpha, beta=beta, lam=lam).total)
    L_obj, L_p, L_v, L_s, L_w = (float(c) for c in comps)
    assert got == pytest.approx(L_obj + alpha * (L_p + lam * L_v) + beta * (L_s + L_w), abs=1e-12)


def test_perturbing_outside_masks_only_moves_objectness(rng):
    pred, labels = random_instance(rng)
    base = multitask_loss(pred, labels).as_floats()
    bumped = {k: v.clone() for k, v in pred.items()}
    bg = labels["objectness"] < 0.5
    bumped["graspness"][bg] += 5.0
    bumped["objectness"][bg] = 0.5
    neg = labels["scores"] <= 0
    bumped["widths"][neg] -= 3.0
    after = multitask_loss(bumped, labels).as_floats()
    for k in ("L_p", "L_v", "L_s", "L_w"):
        assert after[k] == base[k]
    assert after["L_obj"] != base["L_obj"]


def test_empty_mask_component_is_zero(rng):
    pred, labels = random_instance(rng)
    labels["scores"] = torch.zeros_like(labels["scores"])
    assert float(multitask_loss(pred, labels).L_w) == 0.0


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        masked_smooth_l1(torch.zeros(3), torch.zeros(4))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_components_nonnegative(seed):
    pred, labels = random_instance(np.random.default_rng(seed))
    out = multitask_loss(pred, labels).as_floats()
    assert all(out[k] >= 0 for k in ("L_obj", "L_p", "L_v", "L_s", "L_w"))


def test_relative_error_definition():
    assert relative_error(1.0, 1.0) == 0.0
    assert relative_error(2.0, 1.0) == 0.5
    assert relative_error(0.0, 0.0) == 0.0


def test_grad_check_rejects_bad_eps():
    p = torch.zeros(2, dtype=dt, requires_grad=True)
    with pytest.raises(ValueError):
        grad_check([p], lambda: p.sum(), eps=1e-2)


def test_grad_check_linear_layer():
    torch.manual_seed(0)
    layer = torch.nn.Linear(6, 3).double()
    x = torch.randn(10, 6, dtype=dt)
    y = torch.randn(10, 3, dtype=dt)
    err = grad_check(list(layer.parameters()), lambda: smooth_l1(layer(x) - y).mean(), eps=1e-5, n_probes=21)
    assert err < 1e-6


@pytest.fixture(scope="module")
def relaxed_setup(toy_dataset):
    from spikegrasp.config import toy_config
    cfg = toy_config()
    model = SpikeGraspNet(cfg).double()

    def loss_fn():
        losses, aux, _ = example_loss(model, toy_dataset[0], cfg, mode="relaxed", iterations=2, inner_steps=3)
        return losses.total + aux
    return model, loss_fn


def test_grad_check_relaxed_pipeline(relaxed_setup):
    model, loss_fn = relaxed_setup
    assert grad_check(list(model.parameters()), loss_fn, eps=1e-5, n_probes=50, seed=3) < 1e-3


def test_grad_check_halving_eps_is_second_order(relaxed_setup):
    model, loss_fn = relaxed_setup
    coarse = grad_check(list(model.parameters()), loss_fn, eps=1e-4, n_probes=20, seed=5)
    fine = grad_check(list(model.parameters()), loss_fn, eps=5e-5, n_probes=20, seed=5)
    assert fine <= 4 * coarse


def test_zero_steps_returns_initialization(toy_dataset, cfg):
    model, curve = train_tiny(toy_dataset, cfg, steps=0)
    fresh = SpikeGraspNet(cfg)
    assert curve == []
    for (k, a), (_, b) in zip(model.state_dict().items(), fresh.state_dict().items()):
        assert torch.equal(a, b), k


def test_empty_dataset_rejected(cfg):
    with pytest.raises(ValueError):
        train_tiny([], cfg, steps=1)


def test_training_reduces_loss(trained):
    _model, curve, _cfg = trained
    assert len(curve) == 200
    assert curve[-1]["total"] <= 0.5 * curve[0]["total"]
