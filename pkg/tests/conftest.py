import numpy as np
import pytest

from shapesync.rng import RngStream
from shapesync.velocity import ModelConfig, init_params


@pytest.fixture
def micro_cfg():
    """Small geometry that still exercises every architectural piece."""
    return ModelConfig(latent=(2, 4, 4))


@pytest.fixture
def micro_params(micro_cfg):
    return init_params(micro_cfg, RngStream(0).split("init"))


@pytest.fixture
def rng():
    return RngStream(1234)


def rand_grid(dims, seed=0):
    from shapesync.grid import Grid
    g = np.random.default_rng(seed)
    return Grid(g.normal(size=dims).astype(np.float32))
