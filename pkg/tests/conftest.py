import copy

import numpy as np
import pytest
import torch

from spikegrasp.config import toy_config
from spikegrasp.scene import StereoRig, single_sphere_scene

torch.set_num_threads(1)


@pytest.fixture
def cfg():
    return toy_config()


@pytest.fixture(scope="session")
def sphere_scene():
    c = toy_config()
    return single_sphere_scene(rig=StereoRig.looking_down(c.rig, c.scene.table_height), config=c.scene)


@pytest.fixture(scope="session")
def toy_dataset():
    from spikegrasp.training import build_toy_dataset
    return build_toy_dataset(toy_config())


@pytest.fixture(scope="session")
def trained(toy_dataset):
    """The 200-step toy training run shared by every test that needs a trained model."""
    from spikegrasp.training import train_tiny
    c = toy_config()
    model, curve = train_tiny(toy_dataset, c)
    return model, curve, c


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
