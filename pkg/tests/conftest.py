import os
import sys

import pytest

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

os.environ.setdefault("SPLLG_QUIET", "1")

from spllg.config import default_config  # noqa: E402
from spllg.discretization import Discretization  # noqa: E402

# P = 33 puts a = 1 and b = 3 on nodes 8 and 24 of [0, 4]; 4 x 8 modes fit the grid.
SMALL = dict(
    T=0.01,
    dt=0.001,
    save_every=5,
    n_modes_schrodinger=4,
    n_modes_magnet=3,
    n_modes_potential=8,
    grid_points=33,
    ensemble_size=2,
)


@pytest.fixture
def small_config():
    return default_config(**SMALL)


@pytest.fixture
def small_disc(small_config):
    return Discretization(small_config)


@pytest.fixture
def quiet_config(small_config):
    """Noise off; coupling, stray field and anisotropy stay on."""
    return small_config.replace(noise=False)
