"""Scene assembly: terrain + robot placement + cover/fluid sampling.

assemble_scene turns a biome and a decoded design into one ParticleSystem
(robot first, then cover, then water), the terrain SDF, and the material
table whose indices match the particles' material_id. Assembly is
deterministic given (seed, biome, design, placement).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .biomes import BiomeSpec
from .design.base import DesignSpec
from .errors import EmptyRobot, PlacementCollision
from .state import (GridSpec, Material, MaterialParams, ParticleSystem,
                    concatenate)
from .terrain import TerrainSDF, gen_heightmap

LABEL_FREE = 0
LABEL_TERRAIN = 1
LABEL_TERRAIN_MATERIAL = 2
LABEL_ROBOT = 3


@dataclass
class SemanticOccupancyMap:
    """Per-cell labels with precedence robot > terrain_material > terrain > free."""

    labels: np.ndarray   # shape spec.dims, int8
    spec: GridSpec

    def count(self, label: int) -> int:
        return int((self.labels == label).sum())


def build_occupancy(ps: ParticleSystem, terrain: TerrainSDF | None,
                    spec: GridSpec) -> SemanticOccupancyMap:
    labels = np.zeros(spec.dims, dtype=np.int8)
    if terrain is not None:
        centers = (np.stack(np.meshgrid(
            *[np.arange(nd) for nd in spec.dims], indexing="ij"),
            axis=-1).reshape(-1, spec.dim) + 0.5) * spec.dx
        inside = terrain.sdf(centers) <= 0.0
        labels.reshape(-1)[inside] = LABEL_TERRAIN
    cell = np.floor(ps.x / spec.dx).astype(np.int64)
    for ax, nd in enumerate(spec.dims):
        np.clip(cell[:, ax], 0, nd - 1, out=cell[:, ax])
    env = ~ps.robot
    labels[tuple(cell[env].T)] = LABEL_TERRAIN_MATERIAL
    labels[tuple(cell[ps.robot].T)] = LABEL_ROBOT
    return SemanticOccupancyMap(labels=labels, spec=spec)


@dataclass
class Scene:
    ps: ParticleSystem
    terrain: TerrainSDF
    materials: list
    spec: GridSpec
    biome: BiomeSpec
    robot_slice: slice

    @property
    def n_robot(self) -> int:
        return self.robot_slice.stop - self.robot_slice.start


def _cell_keys(x: np.ndarray, spec: GridSpec) -> np.ndarray:
    cell = np.floor(x / spec.dx).astype(np.int64)
    for ax, nd in enumerate(spec.dims):
        np.clip(cell[:, ax], 0, nd - 1, out=cell[:, ax])
    strides = np.cumprod([1] + list(spec.dims[::-1][:-1]))[::-1]
    return cell @ strides


def _sample_columns(spec: GridSpec, margin_cells: int, spacing: float):
    """Lateral sample positions covering the domain interior."""
    lo = margin_cells * spec.dx + spacing / 2.0
    d = spec.dim
    axes = [np.arange(lo, spec.dims[a] * spec.dx - margin_cells * spec.dx,
                      spacing) for a in range(d - 1)]
    if d == 2:
        return axes[0][:, None]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _fill_layer(lateral, z_lo, z_hi, spacing):
    """Particles stacked over columns from per-column z_lo up to z_hi."""
    pts = []
    for i in range(lateral.shape[0]):
        zs = np.arange(z_lo[i] + spacing / 2.0, z_hi[i], spacing)
        if zs.size:
            col = np.repeat(lateral[i][None, :], zs.size, axis=0)
            pts.append(np.concatenate([col, zs[:, None]], axis=1))
    if not pts:
        d = lateral.shape[1] + 1
        return np.zeros((0, d))
    return np.concatenate(pts, axis=0)


def assemble_scene(biome: BiomeSpec, design: DesignSpec | None, spec: GridSpec,
                   seed: int = 0, placement=None,
                   robot_material: MaterialParams | None = None,
                   terrain_base: float = 0.1, terrain_amplitude: float = 0.0,
                   rho_cover: float = 1000.0, rho_water: float = 1000.0,
                   margin_cells: int = 2, particles_per_cell_axis: int = 2
                   ) -> Scene:
    """Build the full particle scene for one biome.

    Cover and water particles are sampled column-wise above the terrain
    surface at dx/particles_per_cell_axis spacing, skipping any cell
    already holding a robot particle. placement translates the design.
    """
    d = spec.dim
    hm = gen_heightmap(seed=seed, dim=d, base=terrain_base,
                       amplitude=terrain_amplitude,
                       extent=spec.dims[0] * spec.dx)
    terrain = TerrainSDF(heightmap=hm, bc=biome.bc, friction=biome.friction)

    materials = [robot_material if robot_material is not None
                 else MaterialParams.from_young_poisson(
                     Material.NEO_HOOKEAN, 2e4, 0.2)]
    systems = []
    robot_cells = np.zeros(0, dtype=np.int64)
    if design is not None and design.n > 0:
        robot = design.to_particles(material_id=0, offset=placement)
        if np.any(terrain.sdf(robot.x) <= 0.0):
            raise PlacementCollision(
                "robot intersects the terrain at spawn; raise the placement")
        lo = margin_cells * spec.dx
        hi = np.asarray(spec.dims) * spec.dx - lo
        if np.any(robot.x < lo) or np.any(robot.x >= hi):
            raise PlacementCollision("robot outside the domain interior")
        systems.append(robot)
        robot_cells = np.unique(_cell_keys(robot.x, spec))
    n_robot = systems[0].n if systems else 0

    spacing = spec.dx / particles_per_cell_axis
    lateral = _sample_columns(spec, margin_cells, spacing)
    surface = hm.height(lateral)

    def keep_free(pts):
        if pts.shape[0] == 0 or robot_cells.size == 0:
            return pts
        keys = _cell_keys(pts, spec)
        return pts[~np.isin(keys, robot_cells)]

    if biome.has_cover:
        top = surface + biome.cover_depth
        pts = keep_free(_fill_layer(lateral, surface, top, spacing))
        if pts.shape[0]:
            materials.append(biome.cover)
            vol = spacing ** d
            systems.append(ParticleSystem.rest(
                pts, mass=rho_cover * vol, volume=vol,
                material_id=len(materials) - 1, robot=False))

    if biome.has_water:
        level = terrain_base + biome.water_depth
        z_lo = surface + (biome.cover_depth if biome.has_cover else 0.0)
        z_hi = np.full(lateral.shape[0], level)
        pts = keep_free(_fill_layer(lateral, z_lo, z_hi, spacing))
        if pts.shape[0]:
            materials.append(MaterialParams(Material.FLUID, bulk=1e4))
            vol = spacing ** d
            systems.append(ParticleSystem.rest(
                pts, mass=rho_water * vol, volume=vol,
                material_id=len(materials) - 1, robot=False))

    if not systems:
        ps = ParticleSystem.rest(np.zeros((0, d)), mass=np.zeros(0),
                                 volume=np.zeros(0), robot=False)
    else:
        ps = systems[0] if len(systems) == 1 else concatenate(systems)
    return Scene(ps=ps, terrain=terrain, materials=materials, spec=spec,
                 biome=biome, robot_slice=slice(0, n_robot))


@dataclass
class Observation:
    """Differentiable centroids plus the semantic map and task payload."""

    x_centroid: np.ndarray
    v_centroid: np.ndarray
    occupancy: SemanticOccupancyMap
    task_payload: dict = field(default_factory=dict)


def observe(ps: ParticleSystem, terrain: TerrainSDF | None, spec: GridSpec,
            task=None, t: float = 0.0) -> Observation:
    sel = ps.robot
    if not sel.any():
        raise EmptyRobot("observation requires at least one robot particle")
    m = ps.mass[sel]
    M = m.sum()
    payload = {}
    if task is not None and hasattr(task, "payload"):
        payload = task.payload(t)
    return Observation(x_centroid=m @ ps.x[sel] / M,
                       v_centroid=m @ ps.v[sel] / M,
                       occupancy=build_occupancy(ps, terrain, spec),
                       task_payload=payload)


def make_control_obs(task=None):
    """Differentiable observation vector for closed-loop controllers.

    Returns (obs_fn, obs_vjp, obs_dim_fn). The vector is [x centroid,
    v centroid] of the robot, plus the task payload vector (constant w.r.t.
    state, so the VJP ignores it).
    """

    def obs_fn(ps):
        sel = ps.robot
        if not sel.any():
            raise EmptyRobot("closed-loop control requires robot particles")
        m = ps.mass[sel]
        M = m.sum()
        parts = [m @ ps.x[sel] / M, m @ ps.v[sel] / M]
        if task is not None and hasattr(task, "payload_vec"):
            parts.append(task.payload_vec())
        return np.concatenate(parts)

    def obs_vjp(ps, gobs, adj):
        sel = ps.robot
        d = ps.dim
        m = ps.mass[sel]
        M = m.sum()
        gx, gv = gobs[:d], gobs[d:2 * d]
        adj.gx[sel] += m[:, None] * gx[None, :] / M
        adj.gv[sel] += m[:, None] * gv[None, :] / M
        xc = m @ ps.x[sel] / M
        vc = m @ ps.v[sel] / M
        adj.gm[sel] += ((ps.x[sel] - xc) @ gx + (ps.v[sel] - vc) @ gv) / M

    def obs_dim(ps_dim: int) -> int:
        extra = 0
        if task is not None and hasattr(task, "payload_vec"):
            extra = task.payload_vec().size
        return 2 * ps_dim + extra

    return obs_fn, obs_vjp, obs_dim
