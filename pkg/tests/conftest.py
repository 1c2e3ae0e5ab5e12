import numpy as np
import pytest

from morphosim.state import GridSpec, Material, MaterialParams, ParticleSystem, SimConfig


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_F(rng, n, d, spread=0.3):
    """Random deformation gradients near identity with positive determinant."""
    F = np.eye(d) + spread * rng.standard_normal((n, d, d))
    J = np.linalg.det(F)
    flip = J <= 0.05
    F[flip] = np.eye(d) + 0.05 * rng.standard_normal((flip.sum(), d, d))
    return F


def small_block(n_side=4, d=2, center=(0.5, 0.6), half=None, n_actuators=2,
                stiffness=500.0, E=2e4, nu=0.2, rho=1000.0, dx=1.0 / 32):
    """A tiny elastic block with two vertical muscle groups, used all over.

    Default particle spacing is dx/2 (two particles per cell per axis).
    """
    if half is None:
        half = (n_side - 1) * dx / 4.0
    axes = [np.linspace(-half, half, n_side) for _ in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    x = np.stack([m.reshape(-1) for m in mesh], axis=1) + np.asarray(center)
    n = x.shape[0]
    vol = (2 * half / max(n_side - 1, 1)) ** d
    muscle = np.zeros((n, n_actuators))
    groups = np.minimum((np.arange(n) * n_actuators) // n, n_actuators - 1)
    muscle[np.arange(n), groups] = 1.0
    fiber = np.zeros((n, d))
    fiber[:, -1] = 1.0  # vertical fibers
    ps = ParticleSystem.rest(x, mass=rho * vol, volume=vol, material_id=0,
                             stiffness=stiffness, muscle=muscle, fiber=fiber)
    mat = MaterialParams.from_young_poisson(Material.NEO_HOOKEAN, E, nu)
    return ps, [mat]


@pytest.fixture
def grid32():
    return GridSpec(dims=(32, 32), dx=1.0 / 32)


@pytest.fixture
def cfg2d():
    return SimConfig(dt=1e-4, gravity=(0.0, -9.8))
