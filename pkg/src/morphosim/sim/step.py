"""One MLS-MPM substep: P2G, grid update, G2P, deformation update.

The substep is functional: it takes a ParticleSystem and returns a new one,
optionally together with a SubstepCache holding everything the adjoint needs
to differentiate this substep without re-deriving branch decisions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import SimulationNaN
from ..state import GridSpec, ParticleSystem, SimConfig
from .kernels import GridUpdate, NodeBC, g2p, grid_update, make_stencil, p2g
from .materials import apply_plasticity, total_stress

log = logging.getLogger(__name__)


@dataclass
class SubstepCache:
    """Forward intermediates of one substep, consumed by backward_substep.

    ps_in/ps_out are references, not copies; the functional stepping style
    never mutates state arrays in place.
    """

    ps_in: ParticleSystem
    ps_out: ParticleSystem
    u: np.ndarray | None
    a: np.ndarray          # (n,) per-particle actuation
    P: np.ndarray          # (n, d, d) total first PK stress
    G: np.ndarray          # (n, d, d) affine momentum matrix
    grid_mass: np.ndarray  # (N,)
    gu: GridUpdate
    C_new: np.ndarray      # (n, d, d) post-gather affine field


def sim_substep(ps: ParticleSystem, spec: GridSpec, materials, bc: NodeBC,
                u: np.ndarray | None, cfg: SimConfig, substep_index: int = 0,
                want_cache: bool = False):
    """Advance the state by one substep of size cfg.dt.

    Returns (new_ps, cache) where cache is None unless want_cache.
    """
    dt = cfg.dt
    dx = spec.dx
    inv_dx2_4 = 4.0 / (dx * dx)

    if u is not None:
        a = ps.muscle @ u
    else:
        a = np.zeros(ps.n)

    P = total_stress(ps.F, ps.fiber, ps.stiffness, a, ps.material_id, materials)
    # affine momentum: stress part plus APIC part
    G = (-inv_dx2_4 * dt) * ps.volume[:, None, None] * \
        (P @ np.swapaxes(ps.F, -1, -2)) + ps.mass[:, None, None] * ps.C

    st = make_stencil(ps.x, spec)
    grid = p2g(st, ps.mass, ps.v, G, spec)
    gu = grid_update(grid, bc, cfg.gravity_vec(), dt)
    v_new, C_new = g2p(st, gu.v_out, dx)

    F_trial = (np.eye(ps.dim) + dt * C_new) @ ps.F
    F_new = apply_plasticity(F_trial, ps.material_id, materials)
    x_new = ps.x + dt * v_new

    if cfg.check_nan:
        _check_finite(x_new, "x", substep_index)
        _check_finite(v_new, "v", substep_index)
        _check_finite(F_new, "F", substep_index)

    out = ps.with_state(x=x_new, v=v_new, F=F_new, C=C_new)
    cache = None
    if want_cache:
        cache = SubstepCache(ps_in=ps, ps_out=out, u=u, a=a, P=P, G=G,
                             grid_mass=grid.mass, gu=gu, C_new=C_new)
    return out, cache


def _check_finite(arr, field, substep):
    bad = ~np.isfinite(arr)
    if bad.any():
        particle = int(np.argwhere(bad.reshape(arr.shape[0], -1).any(axis=1))[0, 0])
        raise SimulationNaN(substep, particle, field)


class Simulator:
    """Owns the static scene pieces and steps particle state through time.

    The node boundary table is precomputed from the terrain once; the terrain
    is immutable for the lifetime of a simulator.
    """

    def __init__(self, spec: GridSpec, materials, cfg: SimConfig,
                 terrain=None):
        self.spec = spec
        self.materials = list(materials)
        self.cfg = cfg
        self.terrain = terrain
        self.bc = build_node_bc(spec, terrain, cfg)
        self._cfl_warned = False

    def substep(self, ps, u=None, substep_index=0, want_cache=False):
        out, cache = sim_substep(ps, self.spec, self.materials, self.bc, u,
                                 self.cfg, substep_index, want_cache)
        if self.cfg.cfl_factor > 0.0 and not self._cfl_warned:
            vmax = float(np.abs(out.v).max()) if out.n else 0.0
            if vmax * self.cfg.dt > self.cfg.cfl_factor * self.spec.dx:
                log.warning(
                    "CFL guideline exceeded at substep %d: |v|max dt = %.3e "
                    "> %.2f dx; consider a smaller dt",
                    substep_index, vmax * self.cfg.dt, self.cfg.cfl_factor)
                self._cfl_warned = True
        return out, cache

    def run(self, ps, n_substeps, controller=None, substeps_per_control=None):
        """Convenience forward rollout. Returns the final state."""
        spc = substeps_per_control or self.cfg.substeps_per_control
        u = None
        for t in range(n_substeps):
            if controller is not None and t % spc == 0:
                u = controller(t // spc, t * self.cfg.dt)
            ps, _ = self.substep(ps, u, substep_index=t)
        return ps


def build_node_bc(spec: GridSpec, terrain, cfg: SimConfig) -> NodeBC:
    """Evaluate the terrain SDF at every node and fill the static BC table."""
    bc = NodeBC.empty(spec, margin=cfg.boundary_margin)
    if terrain is None:
        return bc
    pos = spec.node_positions()
    sdf = terrain.sdf(pos)
    inside = sdf <= 0.0
    if inside.any():
        from .kernels import BC_KINDS
        bc.kind[inside] = BC_KINDS[terrain.bc]
        bc.normal[inside] = terrain.normal(pos[inside])
        bc.mu[inside] = terrain.friction
    return bc
