"""Core state containers: particles, grid, materials, simulation config.

Everything is plain numpy in float64 by default. The same containers serve 2D
and 3D; the spatial dimension is read off the arrays, never hardcoded.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeMismatch


class Material(enum.IntEnum):
    """Constitutive model selector.

    Members:
      NEO_HOOKEAN:    compressible neo-Hookean elasticity.
      FIXED_COROTATED: fixed corotated elasticity (polar rotation reference).
      STVK:           St. Venant-Kirchhoff (Green strain).
      FLUID:          weakly compressible fluid, pressure-only stress.
      SAND:           Hencky elasticity + Drucker-Prager return mapping.
      SNOW:           corotated elasticity + singular-value clamp plasticity.
    """

    NEO_HOOKEAN = 0
    FIXED_COROTATED = 1
    STVK = 2
    FLUID = 3
    SAND = 4
    SNOW = 5


# Models whose plastic projection must run after the deformation update.
PLASTIC_MODELS = (Material.SAND, Material.SNOW, Material.FLUID)


@dataclass
class MaterialParams:
    """Parameters of one constitutive model instance.

    mu/lam are the Lame coefficients for the elastic models. For FLUID,
    `bulk` is the stiffness k and `gamma` the Tait exponent. SAND reads
    `friction_angle` (degrees); SNOW reads the clamp bounds theta_c/theta_s.
    """

    model: Material
    mu: float = 0.0
    lam: float = 0.0
    bulk: float = 0.0
    gamma: float = 7.0
    friction_angle: float = 40.0
    theta_c: float = 2.5e-2
    theta_s: float = 7.5e-3

    @staticmethod
    def from_young_poisson(model: Material, E: float, nu: float, **kw) -> "MaterialParams":
        mu = E / (2.0 * (1.0 + nu))
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return MaterialParams(model=model, mu=mu, lam=lam, **kw)


@dataclass
class SimConfig:
    """Time stepping and numerics.

    dt is the substep size; a control step spans `substeps_per_control`
    substeps during which the action vector is held fixed. `deterministic`
    asserts the serialized scatter path (the numpy backend is sequential
    either way; the flag is honored and recorded). `cfl_factor` only gates a
    warning, never a hard stop.
    """

    dt: float = 1e-4
    substeps_per_control: int = 20
    gravity: tuple = (0.0, -9.8)
    tau_mass: float = 1e-3
    deterministic: bool = True
    dtype: str = "float64"
    check_nan: bool = True
    cfl_factor: float = 0.4
    boundary_margin: int = 2

    @property
    def dim(self) -> int:
        return len(self.gravity)

    def gravity_vec(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=np.float64)


@dataclass
class GridSpec:
    """Background grid geometry: node counts per axis and spacing."""

    dims: tuple
    dx: float

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.dims))

    def node_positions(self) -> np.ndarray:
        """(n_nodes, d) world positions of grid nodes, row-major order."""
        axes = [np.arange(n, dtype=np.float64) * self.dx for n in self.dims]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


@dataclass
class GridField:
    """Scatter targets of one substep: node mass and momentum (flattened)."""

    spec: GridSpec
    mass: np.ndarray
    mom: np.ndarray

    @staticmethod
    def zeros(spec: GridSpec) -> "GridField":
        return GridField(
            spec=spec,
            mass=np.zeros(spec.n_nodes),
            mom=np.zeros((spec.n_nodes, spec.dim)),
        )


@dataclass
class ParticleSystem:
    """Particle state plus per-particle design fields.

    x, v:        (n, d) positions and velocities
    mass:        (n,)
    F:           (n, d, d) deformation gradient
    C:           (n, d, d) APIC affine velocity field
    stiffness:   (n,) muscle stiffness s (zero for passive particles)
    muscle:      (n, K) actuator membership weights r (rows sum to 1 for
                 actuated particles, all-zero rows mark passive particles)
    fiber:       (n, d) unit muscle fiber direction f
    material_id: (n,) index into the scene's material table
    volume:      (n,) rest volume per particle
    robot:       (n,) bool, True for robot particles (vs environment cover)
    design_index: (n,) int, index into the decoded design's base particle set,
                 -1 for particles that did not come from a design decode
    """

    x: np.ndarray
    v: np.ndarray
    mass: np.ndarray
    F: np.ndarray
    C: np.ndarray
    stiffness: np.ndarray
    muscle: np.ndarray
    fiber: np.ndarray
    material_id: np.ndarray
    volume: np.ndarray
    robot: np.ndarray
    design_index: np.ndarray

    def __post_init__(self):
        n, d = self.x.shape
        if self.v.shape != (n, d) or self.F.shape != (n, d, d) or self.C.shape != (n, d, d):
            raise ShapeMismatch("state arrays disagree on (n, d)")
        for name in ("mass", "stiffness", "material_id", "volume"):
            if getattr(self, name).shape != (n,):
                raise ShapeMismatch(f"{name} must have shape ({n},)")
        if self.fiber.shape != (n, d):
            raise ShapeMismatch("fiber must have shape (n, d)")
        if self.muscle.ndim != 2 or self.muscle.shape[0] != n:
            raise ShapeMismatch("muscle must have shape (n, K)")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def n_actuators(self) -> int:
        return self.muscle.shape[1]

    def actuated_mask(self) -> np.ndarray:
        return self.muscle.any(axis=1) & (self.stiffness > 0.0)

    def copy(self) -> "ParticleSystem":
        return ParticleSystem(
            x=self.x.copy(), v=self.v.copy(), mass=self.mass.copy(),
            F=self.F.copy(), C=self.C.copy(), stiffness=self.stiffness.copy(),
            muscle=self.muscle.copy(), fiber=self.fiber.copy(),
            material_id=self.material_id.copy(), volume=self.volume.copy(),
            robot=self.robot.copy(), design_index=self.design_index.copy(),
        )

    def with_state(self, x, v, F, C) -> "ParticleSystem":
        """New system sharing design fields but carrying fresh dynamic state."""
        return replace(self, x=x, v=v, F=F, C=C)

    @staticmethod
    def rest(x: np.ndarray, mass, volume, material_id=0, n_actuators: int = 0,
             stiffness=None, muscle=None, fiber=None, robot=True,
             design_index=None) -> "ParticleSystem":
        """Particles at rest: v = 0, F = I, C = 0."""
        x = np.asarray(x, dtype=np.float64)
        n, d = x.shape
        K = n_actuators if muscle is None else np.asarray(muscle).shape[1]
        fib = np.zeros((n, d)) if fiber is None else np.asarray(fiber, dtype=np.float64)
        if fiber is None:
            fib[:, 0] = 1.0
        return ParticleSystem(
            x=x,
            v=np.zeros((n, d)),
            mass=np.broadcast_to(np.asarray(mass, dtype=np.float64), (n,)).copy(),
            F=np.broadcast_to(np.eye(d), (n, d, d)).copy(),
            C=np.zeros((n, d, d)),
            stiffness=(np.zeros(n) if stiffness is None
                       else np.broadcast_to(np.asarray(stiffness, dtype=np.float64), (n,)).copy()),
            muscle=(np.zeros((n, K)) if muscle is None
                    else np.asarray(muscle, dtype=np.float64).copy()),
            fiber=fib,
            material_id=np.broadcast_to(np.asarray(material_id), (n,)).astype(np.int64).copy(),
            volume=np.broadcast_to(np.asarray(volume, dtype=np.float64), (n,)).copy(),
            robot=np.broadcast_to(np.asarray(robot, dtype=bool), (n,)).copy(),
            design_index=(np.full(n, -1, dtype=np.int64) if design_index is None
                          else np.asarray(design_index, dtype=np.int64).copy()),
        )


def concatenate(systems: list) -> ParticleSystem:
    """Stack particle systems into one (robot + environment cover + fluid)."""
    if not systems:
        raise ShapeMismatch("nothing to concatenate")
    d = systems[0].dim
    K = max(s.n_actuators for s in systems)

    def pad_muscle(m):
        if m.shape[1] == K:
            return m
        out = np.zeros((m.shape[0], K))
        out[:, : m.shape[1]] = m
        return out

    return ParticleSystem(
        x=np.concatenate([s.x for s in systems]),
        v=np.concatenate([s.v for s in systems]),
        mass=np.concatenate([s.mass for s in systems]),
        F=np.concatenate([s.F for s in systems]),
        C=np.concatenate([s.C for s in systems]),
        stiffness=np.concatenate([s.stiffness for s in systems]),
        muscle=np.concatenate([pad_muscle(s.muscle) for s in systems]),
        fiber=np.concatenate([s.fiber for s in systems]),
        material_id=np.concatenate([s.material_id for s in systems]),
        volume=np.concatenate([s.volume for s in systems]),
        robot=np.concatenate([s.robot for s in systems]),
        design_index=np.concatenate([s.design_index for s in systems]),
    )
