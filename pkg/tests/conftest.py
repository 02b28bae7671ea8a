import math

import numpy as np
import pytest

from harnacklab import geometry as geo


@pytest.fixture
def circle():
    return geo.static_flat(geo.Chart.circle())


@pytest.fixture
def sphere():
    return geo.round_sphere(2, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sphere_points(n=6):
    th, ph = np.meshgrid(np.linspace(0.4, math.pi - 0.4, n), np.linspace(0.2, 6.0, n), indexing="ij")
    return np.stack([th.ravel(), ph.ravel()], axis=-1)
