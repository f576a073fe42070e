# tests/conftest.py
import numpy as np
import pytest

from core.config_manager import RunConfigManager
from core.model_zoo import build_network
from uav.simulation import lane_scene


@pytest.fixture
def run_config(tmp_path):
    """Default run config isolated from the environment, writing under tmp_path"""
    return RunConfigManager(use_env=False).load({"out_dir": str(tmp_path)})


@pytest.fixture
def tiny_net():
    """Improved network at 32 px with a handful of filters per layer"""
    return build_network("improved", num_classes=3, boxes_per_cell=2, input_size=32,
                         width=1 / 64, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def lane():
    """Straight lane along +y with no defects"""
    return lane_scene()
