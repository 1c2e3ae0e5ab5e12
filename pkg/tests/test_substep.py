"""Forward substep behavior: free fall, settling, muscle extension."""
import numpy as np
import pytest

from morphosim.errors import SimulationNaN
from morphosim.sim import Simulator
from morphosim.state import GridSpec, Material, MaterialParams, ParticleSystem, SimConfig
from morphosim.terrain import TerrainSDF, gen_heightmap

from conftest import small_block


def test_single_particle_free_fall_matches_kinematics():
    # no stress (F = I), no terrain: one substep adds dt*g to v, advects x
    spec = GridSpec(dims=(32, 32), dx=1.0 / 32)
    cfg = SimConfig(dt=1e-3, gravity=(0.0, -10.0), boundary_margin=0)
    ps = ParticleSystem.rest(np.array([[0.5, 0.5]]), mass=1.0, volume=1e-4)
    mat = MaterialParams(Material.NEO_HOOKEAN, mu=0.0, lam=0.0)
    sim = Simulator(spec, [mat], cfg)
    for t in range(5):
        ps, _ = sim.substep(ps, substep_index=t)
    np.testing.assert_allclose(ps.v[0], [0.0, -10.0 * 1e-3 * 5], atol=1e-12)
    expected_y = 0.5 - 10.0 * 1e-3 ** 2 * (1 + 2 + 3 + 4 + 5)
    np.testing.assert_allclose(ps.x[0, 1], expected_y, atol=1e-12)


def test_block_settles_on_sticky_ground():
    dx = 1.0 / 32
    base = 0.12
    half = 3 * dx / 4
    ps, mats = small_block(center=(0.5, base + half + dx))
    hm = gen_heightmap(seed=0, dim=2, base=base, amplitude=0.0)
    terrain = TerrainSDF(hm, bc="sticky")
    spec = GridSpec(dims=(32, 32), dx=dx)
    cfg = SimConfig(dt=2e-4, gravity=(0.0, -9.8))
    sim = Simulator(spec, mats, cfg, terrain=terrain)
    for t in range(1500):
        ps, _ = sim.substep(ps, substep_index=t)
    assert np.isfinite(ps.x).all()
    assert np.abs(ps.v).max() < 1e-2
    assert ps.x[:, 1].min() > 0.10  # resting on, not through, the ground


def test_muscle_contraction_changes_fiber_length():
    # a > 0 targets |F f|^2 = a < 1, so fibers contract; a steady push shows
    # monotone-ish shortening over the first stretch of the run
    ps, mats = small_block(center=(0.5, 0.5), stiffness=2000.0)
    spec = GridSpec(dims=(32, 32), dx=1.0 / 32)
    cfg = SimConfig(dt=1e-4, gravity=(0.0, 0.0))
    sim = Simulator(spec, mats, cfg)
    u = np.array([0.3, 0.3])

    def mean_fiber_len(ps):
        Ff = np.einsum("nij,nj->ni", ps.F, ps.fiber)
        return float(np.linalg.norm(Ff, axis=1).mean())

    l0 = mean_fiber_len(ps)
    for t in range(100):
        ps, _ = sim.substep(ps, u=u, substep_index=t)
    l1 = mean_fiber_len(ps)
    assert l1 < l0


def test_nan_guard_raises_with_location():
    ps, mats = small_block()
    ps.v[3, 0] = np.nan
    spec = GridSpec(dims=(32, 32), dx=1.0 / 32)
    cfg = SimConfig(dt=1e-4)
    sim = Simulator(spec, mats, cfg)
    with pytest.raises(SimulationNaN) as ei:
        sim.substep(ps, substep_index=7)
    assert ei.value.substep == 7
