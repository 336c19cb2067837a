import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rehab3d.synth import NoiseConfig, make_rig, make_scene

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def rig():
    return make_rig(4, 3.0)


@pytest.fixture(scope="session")
def scene():
    return make_scene(4, 1.0, seed=3)


@pytest.fixture(scope="session")
def noisy_scene():
    return make_scene(4, 1.0, seed=4, noise=NoiseConfig(pixel_sigma=2.0))


def random_pose(rng, n=17, scale=0.5):
    return rng.normal(0.0, scale, (n, 3))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q
