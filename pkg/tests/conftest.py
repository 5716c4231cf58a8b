import numpy as np
import pytest

from dynplast.config import load_scenario
from dynplast.dynamics import solve


def random_sym(rng, n, scale=1.0):
    g = rng.normal(size=(n, n)) * scale
    return 0.5 * (g + g.T)


def random_spd(rng, n, lo=0.5, hi=2.0):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return q @ np.diag(rng.uniform(lo, hi, n)) @ q.T


def random_unit(rng, n):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def plastic_traj():
    scn, opts, _ = load_scenario("plastic_shear")
    return solve(scn, opts)


@pytest.fixture(scope="session")
def elastic_traj():
    scn, opts, _ = load_scenario("elastic_release")
    return solve(scn, opts)
