"""Base particle sets and the decoded design container.

A design lives on a fixed lattice of base particles spanning a workspace
box. Decoders fill per-particle mass, stiffness, muscle membership, and
fiber direction; pruning at the mass cutoff happens after decoding and
outside the differentiated region.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyRobot, ShapeMismatch
from ..state import ParticleSystem


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned box the robot design may occupy, in world units."""

    lo: tuple
    hi: tuple

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    def lattice(self, spacing: float) -> np.ndarray:
        """Regular base lattice, first site half a spacing inside lo."""
        axes = [np.arange(self.lo[a] + spacing / 2.0, self.hi[a] - 1e-12,
                          spacing) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


@dataclass
class BaseParticles:
    """The fixed sites a design is decoded onto."""

    x: np.ndarray          # (n, d) world positions
    volume: float          # rest volume per site
    m0: float              # full-occupancy mass per site
    s0: float              # stiffness scale

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @staticmethod
    def from_workspace(ws: Workspace, dx: float, rho: float = 1000.0,
                       s0: float = 1000.0, particles_per_cell_axis: int = 2
                       ) -> "BaseParticles":
        spacing = dx / particles_per_cell_axis
        x = ws.lattice(spacing)
        vol = spacing ** ws.dim
        return BaseParticles(x=x, volume=vol, m0=rho * vol, s0=s0)


@dataclass
class DesignSpec:
    """Decoded per-particle design attributes over a base set.

    Invariants: 0 <= m <= m0, 0 <= s <= s0, rows of r on the simplex,
    rows of f unit norm. validate() enforces them; pruned() drops sites
    below the mass cutoff.
    """

    x: np.ndarray        # (n, d)
    m: np.ndarray        # (n,)
    s: np.ndarray        # (n,)
    r: np.ndarray        # (n, K)
    f: np.ndarray        # (n, d)
    volume: float
    m0: float
    s0: float
    base_index: np.ndarray = field(default=None)  # indices into the base set

    def __post_init__(self):
        n, d = self.x.shape
        for name, arr, shape in [("m", self.m, (n,)), ("s", self.s, (n,)),
                                 ("f", self.f, (n, d))]:
            if arr.shape != shape:
                raise ShapeMismatch(f"design field {name}: {arr.shape} != {shape}")
        if self.r.ndim != 2 or self.r.shape[0] != n:
            raise ShapeMismatch(f"design field r: {self.r.shape}")
        if self.base_index is None:
            self.base_index = np.arange(n, dtype=np.int64)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def n_actuators(self) -> int:
        return self.r.shape[1]

    def validate(self, atol: float = 1e-7):
        if not (np.all(self.m >= -atol) and np.all(self.m <= self.m0 + atol)):
            raise ValueError("mass outside [0, m0]")
        if not (np.all(self.s >= -atol) and np.all(self.s <= self.s0 + atol)):
            raise ValueError("stiffness outside [0, s0]")
        if not np.all(self.r >= -atol):
            raise ValueError("negative muscle membership")
        if not np.allclose(self.r.sum(axis=1), 1.0, atol=1e-6):
            raise ValueError("muscle memberships must sum to 1 per particle")
        if not np.allclose(np.linalg.norm(self.f, axis=1), 1.0, atol=1e-6):
            raise ValueError("fiber directions must be unit vectors")

    def pruned(self, tau: float = 1e-3) -> "DesignSpec":
        """Drop sites with m < tau * m0 (hard cutoff, not differentiated)."""
        keep = self.m >= tau * self.m0
        if not keep.any():
            raise EmptyRobot("every design particle fell below the mass cutoff")
        return DesignSpec(x=self.x[keep], m=self.m[keep], s=self.s[keep],
                          r=self.r[keep], f=self.f[keep], volume=self.volume,
                          m0=self.m0, s0=self.s0,
                          base_index=self.base_index[keep])

    def to_particles(self, material_id: int = 0,
                     offset=None) -> ParticleSystem:
        x = self.x if offset is None else self.x + np.asarray(offset)
        return ParticleSystem.rest(
            x=x, mass=self.m.copy(), volume=self.volume,
            material_id=material_id, stiffness=self.s.copy(),
            muscle=self.r.copy(), fiber=self.f.copy(), robot=True,
            design_index=self.base_index.copy())


@dataclass
class DesignGrad:
    """Per-base-particle cotangents flowing back into a decoder.

    Sized to the full base set; rollout cotangents of pruned designs are
    scattered back through base_index before reaching a decoder.
    """

    gm: np.ndarray   # (n_base,)
    gs: np.ndarray   # (n_base,)
    gr: np.ndarray   # (n_base, K)

    @staticmethod
    def zeros(n_base: int, n_actuators: int) -> "DesignGrad":
        return DesignGrad(gm=np.zeros(n_base), gs=np.zeros(n_base),
                          gr=np.zeros((n_base, n_actuators)))

    @staticmethod
    def from_rollout(adj, ps: ParticleSystem, n_base: int) -> "DesignGrad":
        """Scatter pruned-system cotangents back onto the base lattice."""
        g = DesignGrad.zeros(n_base, ps.muscle.shape[1])
        sel = ps.robot & (ps.design_index >= 0)
        idx = ps.design_index[sel]
        np.add.at(g.gm, idx, adj.gm[sel])
        np.add.at(g.gs, idx, adj.gs[sel])
        np.add.at(g.gr, idx, adj.gmuscle[sel])
        return g
