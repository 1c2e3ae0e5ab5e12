"""Biome table, scene assembly audits, observation contracts."""
import numpy as np
import pytest

from morphosim.biomes import BIOMES, get_biome
from morphosim.design.base import BaseParticles, DesignSpec, Workspace
from morphosim.errors import ConfigError, EmptyRobot, PlacementCollision
from morphosim.scene import (LABEL_FREE, LABEL_ROBOT, LABEL_TERRAIN,
                             LABEL_TERRAIN_MATERIAL, assemble_scene,
                             build_occupancy, make_control_obs, observe)
from morphosim.state import GridSpec, Material


def box_design(lo=(0.45, 0.2), hi=(0.55, 0.28), dx=1.0 / 32, k=2):
    ws = Workspace(lo=lo, hi=hi)
    base = BaseParticles.from_workspace(ws, dx)
    n, d = base.n, base.dim
    r = np.zeros((n, k))
    r[np.arange(n) % k == 0, 0] = 1.0
    r[np.arange(n) % k == 1, 1] = 1.0
    f = np.zeros((n, d))
    f[:, -1] = 1.0
    return DesignSpec(x=base.x.copy(), m=np.full(n, base.m0),
                      s=np.full(n, 0.5 * base.s0), r=r, f=f,
                      volume=base.volume, m0=base.m0, s0=base.s0)


SPEC = GridSpec(dims=(32, 32), dx=1.0 / 32)


def test_biome_table_matches_material_rows():
    # row-for-row: which biomes carry an elastoplastic cover, fluid, and
    # what contact the bare-terrain biomes use
    assert set(BIOMES) == {"Ground", "Desert", "Wetland", "Clay", "Ice",
                           "Snow", "ShallowWater", "Ocean"}
    covered = {name: b.has_cover for name, b in BIOMES.items()}
    assert covered == {"Ground": False, "Desert": True, "Wetland": True,
                       "Clay": True, "Ice": False, "Snow": True,
                       "ShallowWater": False, "Ocean": False}
    fluid = {name: b.has_water for name, b in BIOMES.items()}
    assert fluid == {"Ground": False, "Desert": False, "Wetland": True,
                     "Clay": False, "Ice": False, "Snow": False,
                     "ShallowWater": True, "Ocean": True}
    assert BIOMES["Ocean"].water_depth > BIOMES["ShallowWater"].water_depth
    assert BIOMES["Ground"].bc == "sticky"
    assert BIOMES["Ice"].bc == "friction"
    assert BIOMES["Ice"].friction < BIOMES["Ground"].friction
    for name in ["Desert", "Wetland", "Clay"]:
        assert BIOMES[name].cover.model == Material.SAND
    assert BIOMES["Snow"].cover.model == Material.SNOW
    # parameter-level distinction between the granular biomes
    assert BIOMES["Desert"].cover.friction_angle > \
        BIOMES["Clay"].cover.friction_angle
    with pytest.raises(ConfigError):
        get_biome("Moon")


def test_ground_scene_robot_only():
    scene = assemble_scene(get_biome("Ground"), box_design(), SPEC, seed=3)
    assert scene.ps.robot.all()
    assert scene.n_robot == scene.ps.n > 0
    assert len(scene.materials) == 1
    assert scene.terrain.bc == "sticky"


def test_ocean_scene_fluid_fill_audit():
    biome = get_biome("Ocean")
    scene = assemble_scene(biome, box_design(), SPEC, seed=3)
    level = 0.1 + biome.water_depth
    water = ~scene.ps.robot
    assert water.sum() > 0
    # fluid fills below the level, above the terrain, nowhere inside
    # robot-occupied cells
    assert np.all(scene.ps.x[water, -1] <= level)
    assert np.all(scene.terrain.sdf(scene.ps.x[water]) > 0.0)
    occ = build_occupancy(scene.ps, scene.terrain, SPEC)
    robot_cells = np.floor(scene.ps.x[scene.ps.robot] / SPEC.dx).astype(int)
    water_cells = np.floor(scene.ps.x[water] / SPEC.dx).astype(int)
    robot_keys = {tuple(c) for c in robot_cells}
    assert not any(tuple(c) in robot_keys for c in water_cells)
    # robot label wins in every robot cell (precedence audit)
    assert all(occ.labels[c] == LABEL_ROBOT for c in robot_keys)
    assert occ.count(LABEL_TERRAIN) > 0
    assert occ.count(LABEL_TERRAIN_MATERIAL) > 0


def test_zero_size_robot_scene():
    scene = assemble_scene(get_biome("Desert"), None, SPEC, seed=1)
    assert scene.n_robot == 0
    assert (~scene.ps.robot).all()
    assert scene.ps.n > 0  # the sand cover is still there


def test_placement_collision_raises():
    with pytest.raises(PlacementCollision):
        assemble_scene(get_biome("Ground"), box_design(), SPEC, seed=0,
                       placement=(0.0, -0.18))


def test_scene_deterministic_per_seed():
    a = assemble_scene(get_biome("Wetland"), box_design(), SPEC, seed=9,
                       terrain_amplitude=0.03)
    b = assemble_scene(get_biome("Wetland"), box_design(), SPEC, seed=9,
                       terrain_amplitude=0.03)
    c = assemble_scene(get_biome("Wetland"), box_design(), SPEC, seed=10,
                       terrain_amplitude=0.03)
    assert np.array_equal(a.ps.x, b.ps.x)
    assert np.array_equal(a.terrain.heightmap.values, b.terrain.heightmap.values)
    assert not np.array_equal(a.terrain.heightmap.values,
                              c.terrain.heightmap.values)


def test_observe_centroids_and_errors():
    scene = assemble_scene(get_biome("Ground"), box_design(), SPEC, seed=0)
    obs = observe(scene.ps, scene.terrain, SPEC)
    sel = scene.ps.robot
    m = scene.ps.mass[sel]
    np.testing.assert_allclose(obs.x_centroid, m @ scene.ps.x[sel] / m.sum())
    assert np.all(obs.v_centroid == 0.0)

    env_only = assemble_scene(get_biome("Desert"), None, SPEC, seed=0)
    with pytest.raises(EmptyRobot):
        observe(env_only.ps, env_only.terrain, SPEC)


def test_control_obs_vjp_matches_fd():
    import dataclasses
    from morphosim.autodiff import AdjointState
    rng = np.random.default_rng(4)
    scene = assemble_scene(get_biome("Ground"), box_design(), SPEC, seed=0)
    ps = dataclasses.replace(scene.ps,
                             v=0.1 * rng.standard_normal(scene.ps.x.shape))
    obs_fn, obs_vjp, obs_dim = make_control_obs()
    assert obs_dim(ps.dim) == 4
    gobs = rng.standard_normal(4)
    adj = AdjointState.zeros(ps)
    obs_vjp(ps, gobs, adj)

    h = 1e-6
    for field, got in [("x", adj.gx), ("v", adj.gv)]:
        base = getattr(ps, field)
        fd = np.zeros_like(base)
        for k in range(base.size):
            pert = np.zeros(base.size)
            pert[k] = h
            pp = dataclasses.replace(ps, **{field: base + pert.reshape(base.shape)})
            pm = dataclasses.replace(ps, **{field: base - pert.reshape(base.shape)})
            fd.reshape(-1)[k] = float(gobs @ (obs_fn(pp) - obs_fn(pm))) / (2 * h)
        assert np.abs(got - fd).max() <= 1e-8
    # mass cotangent
    fdm = np.zeros(ps.n)
    for k in range(ps.n):
        mp = ps.mass.copy(); mp[k] += h
        mm = ps.mass.copy(); mm[k] -= h
        pp = dataclasses.replace(ps, mass=mp)
        pm = dataclasses.replace(ps, mass=mm)
        fdm[k] = float(gobs @ (obs_fn(pp) - obs_fn(pm))) / (2 * h)
    assert np.abs(adj.gm - fdm).max() <= 1e-8
