"""Grid transfer kernels: quadratic B-spline stencils, P2G, grid update, G2P.

The same code serves 2D and 3D; the stencil enumerates the 3^d neighbor
offsets and every per-offset operation is vectorized over particles. Scatter
uses np.add.at, which applies updates in index order, so accumulation is
serialized and bit-reproducible. That is the deterministic mode; there is no
other scatter path.

Conventions:
  base = floor(x/dx - 0.5), frac = x/dx - base, frac in [0.5, 1.5]^d
  dpos = (offset - frac) * dx is the node-minus-particle vector in world units
  APIC inertia for quadratic splines: D = (dx^2/4) I, so C gathers carry 4/dx^2
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..state import GridField, GridSpec


def quadratic_bspline(frac: np.ndarray) -> np.ndarray:
    """Quadratic B-spline weights for the three stencil nodes along one axis.

    frac is the particle offset from the base node in cell units, in
    [0.5, 1.5]. Returns weights stacked on a new leading axis of size 3.
    The three weights sum to 1 for any frac (partition of unity).
    """
    f = np.asarray(frac, dtype=np.float64)
    w0 = 0.5 * (1.5 - f) ** 2
    w1 = 0.75 - (f - 1.0) ** 2
    w2 = 0.5 * (f - 0.5) ** 2
    return np.stack([w0, w1, w2], axis=0)


def quadratic_bspline_grad(frac: np.ndarray) -> np.ndarray:
    """d(weight)/d(frac) for the three stencil nodes along one axis."""
    f = np.asarray(frac, dtype=np.float64)
    return np.stack([f - 1.5, -2.0 * (f - 1.0), f - 0.5], axis=0)


@lru_cache(maxsize=4)
def stencil_offsets(dim: int) -> np.ndarray:
    """(3^d, d) integer offsets of the quadratic stencil, row-major order."""
    grids = np.meshgrid(*([np.arange(3)] * dim), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


@lru_cache(maxsize=8)
def _strides(dims: tuple) -> np.ndarray:
    s = np.ones(len(dims), dtype=np.int64)
    for ax in range(len(dims) - 2, -1, -1):
        s[ax] = s[ax + 1] * dims[ax + 1]
    return s


@dataclass
class Stencil:
    """Per-substep interpolation data shared by P2G and G2P.

    wo:   (S, n) combined weight of each of the S = 3^d offsets
    dwo:  (S, n, d) gradient of the combined weight w.r.t. particle position
    dpos: (S, n, d) node position minus particle position, world units
    flat: (S, n) flattened grid node index per offset
    """

    base: np.ndarray
    frac: np.ndarray
    wo: np.ndarray
    dwo: np.ndarray
    dpos: np.ndarray
    flat: np.ndarray


def make_stencil(x: np.ndarray, spec: GridSpec) -> Stencil:
    n, d = x.shape
    inv_dx = 1.0 / spec.dx
    xs = x * inv_dx
    base = np.floor(xs - 0.5).astype(np.int64)
    # keep the 3-node stencil on the grid; particles are kept in the interior
    # by the boundary conditions, the clip only guards against blowups
    for ax, nd in enumerate(spec.dims):
        np.clip(base[:, ax], 0, nd - 3, out=base[:, ax])
    frac = xs - base

    w = quadratic_bspline(frac)        # (3, n, d)
    dw = quadratic_bspline_grad(frac)  # (3, n, d)
    offs = stencil_offsets(d)          # (S, d)
    S = offs.shape[0]

    sel = [w[offs[:, ax], :, ax] for ax in range(d)]    # each (S, n)
    dsel = [dw[offs[:, ax], :, ax] for ax in range(d)]

    wo = sel[0].copy()
    for ax in range(1, d):
        wo *= sel[ax]

    dwo = np.empty((S, n, d))
    for ax in range(d):
        g = dsel[ax] * inv_dx
        for other in range(d):
            if other != ax:
                g = g * sel[other]
        dwo[:, :, ax] = g

    dpos = (offs[:, None, :] - frac[None, :, :]) * spec.dx
    flat = (base[None, :, :] + offs[:, None, :]) @ _strides(spec.dims)
    return Stencil(base=base, frac=frac, wo=wo, dwo=dwo, dpos=dpos, flat=flat)


def p2g(st: Stencil, mass: np.ndarray, v: np.ndarray, G: np.ndarray,
        spec: GridSpec) -> GridField:
    """Scatter particle mass and momentum to the grid.

    G is the per-particle affine momentum matrix: the stress contribution
    -(4/dx^2) dt V0 P F^T plus the APIC term m C. Node momentum receives
    w * (m v + G dpos) and node mass receives w * m.
    """
    grid = GridField.zeros(spec)
    S = st.wo.shape[0]
    for o in range(S):
        w = st.wo[o]
        idx = st.flat[o]
        np.add.at(grid.mass, idx, w * mass)
        contrib = w[:, None] * (mass[:, None] * v
                                + np.einsum("nij,nj->ni", G, st.dpos[o]))
        np.add.at(grid.mom, idx, contrib)
    return grid


# Boundary condition kinds on grid nodes.
BC_NONE = 0
BC_STICKY = 1
BC_SLIP = 2
BC_SEPARATE = 3
BC_FRICTION = 4

BC_KINDS = {"none": BC_NONE, "sticky": BC_STICKY, "slip": BC_SLIP,
            "separate": BC_SEPARATE, "friction": BC_FRICTION}

# Codes of what was actually applied at a node (stored for the backward pass).
APPLIED_NONE = 0
APPLIED_STICKY = 1
APPLIED_PROJECT = 2    # tangential projection (slip, or separate/friction that acted)
APPLIED_FRICTION = 4   # Coulomb scaling of the tangential velocity
APPLIED_STOP = 5       # friction brought the node to rest


@dataclass
class NodeBC:
    """Static per-node boundary data, precomputed once per scene.

    kind/normal/mu describe the terrain condition at nodes inside the
    terrain (SDF <= 0). lo_clamp/hi_clamp mark the domain-margin nodes where
    the outward velocity component is clamped per axis.
    """

    kind: np.ndarray      # (N,) int8
    normal: np.ndarray    # (N, d)
    mu: np.ndarray        # (N,)
    lo_clamp: np.ndarray  # (N, d) bool
    hi_clamp: np.ndarray  # (N, d) bool

    @staticmethod
    def empty(spec: GridSpec, margin: int = 2) -> "NodeBC":
        N, d = spec.n_nodes, spec.dim
        bc = NodeBC(kind=np.zeros(N, dtype=np.int8),
                    normal=np.zeros((N, d)),
                    mu=np.zeros(N),
                    lo_clamp=np.zeros((N, d), dtype=bool),
                    hi_clamp=np.zeros((N, d), dtype=bool))
        if margin > 0:
            idx = np.unravel_index(np.arange(N), spec.dims)
            for ax in range(d):
                bc.lo_clamp[:, ax] = idx[ax] < margin
                bc.hi_clamp[:, ax] = idx[ax] >= spec.dims[ax] - margin
        return bc


@dataclass
class GridUpdate:
    """Outcome of the grid stage of one substep.

    v_in is the velocity after momentum normalization and gravity, before any
    boundary handling; v_out is what G2P gathers. applied/clamped record the
    branch taken at each node so the adjoint can replay the same branches.
    """

    active: np.ndarray   # (N,) bool
    v_raw: np.ndarray    # (N, d) momentum / mass
    v_in: np.ndarray     # (N, d) v_raw + dt g
    v_out: np.ndarray    # (N, d)
    applied: np.ndarray  # (N,) int8
    clamped: np.ndarray  # (N, d) bool, domain clamp zeroed this component


def grid_update(grid: GridField, bc: NodeBC, gravity: np.ndarray,
                dt: float) -> GridUpdate:
    """Normalize momentum, apply gravity, then boundary conditions."""
    active = grid.mass > 0.0
    v_raw = np.zeros_like(grid.mom)
    np.divide(grid.mom, grid.mass[:, None], out=v_raw, where=active[:, None])
    v_in = v_raw + dt * gravity[None, :]
    v_in[~active] = 0.0

    v_out = v_in.copy()
    applied = np.zeros(grid.mass.shape[0], dtype=np.int8)

    has_bc = active & (bc.kind != BC_NONE)
    if has_bc.any():
        _apply_terrain_bc(v_out, applied, has_bc, bc, v_in)

    # domain margin: clamp the outward component so particles stay on the grid
    lo = bc.lo_clamp & (v_out < 0.0) & active[:, None]
    hi = bc.hi_clamp & (v_out > 0.0) & active[:, None]
    clamped = lo | hi
    v_out[clamped] = 0.0

    return GridUpdate(active=active, v_raw=v_raw, v_in=v_in, v_out=v_out,
                      applied=applied, clamped=clamped)


def _apply_terrain_bc(v_out, applied, mask, bc: NodeBC, v_in):
    kind = bc.kind
    n = bc.normal

    sticky = mask & (kind == BC_STICKY)
    v_out[sticky] = 0.0
    applied[sticky] = APPLIED_STICKY

    vn = np.einsum("nd,nd->n", v_in, n)

    slip = mask & (kind == BC_SLIP)
    sep = mask & (kind == BC_SEPARATE) & (vn < 0.0)
    proj = slip | sep
    v_out[proj] = v_in[proj] - n[proj] * vn[proj, None]
    applied[proj] = APPLIED_PROJECT

    fric = mask & (kind == BC_FRICTION) & (vn < 0.0)
    if fric.any():
        vt = v_in[fric] - n[fric] * vn[fric, None]
        t = np.linalg.norm(vt, axis=1)
        # Coulomb: remove the inward normal component, shrink the tangential
        # speed by mu |vn|; nodes inside the static cone stop entirely.
        stop = t <= -bc.mu[fric] * vn[fric]
        scale = np.zeros_like(t)
        moving = ~stop
        scale[moving] = 1.0 + bc.mu[fric][moving] * vn[fric][moving] / t[moving]
        out = vt * scale[:, None]
        out[stop] = 0.0
        v_out[fric] = out
        codes = np.where(stop, APPLIED_STOP, APPLIED_FRICTION).astype(np.int8)
        applied[fric] = codes


def g2p(st: Stencil, v_grid: np.ndarray, dx: float):
    """Gather grid velocities back to particles.

    Returns (v_new, C_new): v' = sum w v_i and the APIC affine field
    C' = (4/dx^2) sum w v_i dpos^T.
    """
    S, n = st.wo.shape
    d = st.dpos.shape[2]
    v_new = np.zeros((n, d))
    C_new = np.zeros((n, d, d))
    for o in range(S):
        vi = v_grid[st.flat[o]]                      # (n, d)
        w = st.wo[o][:, None]
        v_new += w * vi
        C_new += (w[:, :, None] * vi[:, :, None]) * st.dpos[o][:, None, :]
    C_new *= 4.0 / (dx * dx)
    return v_new, C_new
