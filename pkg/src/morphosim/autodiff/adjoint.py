"""Hand-written adjoint of one MLS-MPM substep.

backward_substep walks sim_substep in exact reverse order, reusing the
branch decisions recorded in the SubstepCache (BC codes, clamp masks,
active-node set) rather than re-deriving them, so forward and backward
always agree on which non-smooth branch was taken. Plasticity projections
are passed through unchanged, matching their forward treatment as
non-smooth resets of the elastic state.

Cotangent bookkeeping: gx/gv/gF/gC are state cotangents and are replaced
as the walk crosses each stage; gs/gm/gvol/gmuscle are parameter
cotangents and only ever accumulate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteGradient
from ..sim.kernels import (APPLIED_FRICTION, APPLIED_PROJECT, APPLIED_STICKY,
                           APPLIED_STOP, GridUpdate, NodeBC, make_stencil)
from ..sim.step import SubstepCache
from ..state import GridSpec, ParticleSystem, SimConfig
from .vjp import total_stress_vjp


def _T(m):
    return np.swapaxes(m, -1, -2)


@dataclass
class AdjointState:
    """Cotangents of a scalar loss with respect to one particle state.

    gx/gv/gF/gC refer to the state at whatever time the backward walk has
    reached; the remaining fields accumulate parameter cotangents across
    every substep walked so far.
    """

    gx: np.ndarray       # (n, d)
    gv: np.ndarray       # (n, d)
    gF: np.ndarray       # (n, d, d)
    gC: np.ndarray       # (n, d, d)
    gs: np.ndarray       # (n,)   actuation stiffness
    gm: np.ndarray       # (n,)   particle mass
    gvol: np.ndarray     # (n,)   rest volume
    gmuscle: np.ndarray  # (n, K) actuation ratios

    @staticmethod
    def zeros(ps: ParticleSystem) -> "AdjointState":
        n, d = ps.n, ps.dim
        return AdjointState(
            gx=np.zeros((n, d)), gv=np.zeros((n, d)),
            gF=np.zeros((n, d, d)), gC=np.zeros((n, d, d)),
            gs=np.zeros(n), gm=np.zeros(n), gvol=np.zeros(n),
            gmuscle=np.zeros_like(ps.muscle))

    def state_dot(self, other: "AdjointState") -> float:
        return float(np.sum(self.gx * other.gx) + np.sum(self.gv * other.gv)
                     + np.sum(self.gF * other.gF) + np.sum(self.gC * other.gC))


def backward_substep(cache: SubstepCache, adj: AdjointState, spec: GridSpec,
                     materials, bc: NodeBC, cfg: SimConfig):
    """Pull adj back through one cached substep.

    On entry adj holds cotangents w.r.t. cache.ps_out; on exit w.r.t.
    cache.ps_in. Returns the control cotangent gu (K,), or None when the
    substep ran without a control vector.
    """
    ps = cache.ps_in
    dt = cfg.dt
    dx = spec.dx
    D = 4.0 / (dx * dx)
    c_G = -D * dt
    n, d = ps.n, ps.dim

    # x' = x + dt v'
    gx = adj.gx.copy()
    gv_new = adj.gv + dt * adj.gx

    # F' = project(F_trial) straight-through; F_trial = (I + dt C') F
    gF_tr = adj.gF
    gC_new = adj.gC + dt * (gF_tr @ _T(ps.F))
    gF = _T(np.eye(d) + dt * cache.C_new) @ gF_tr

    st = make_stencil(ps.x, spec)
    S = st.wo.shape[0]

    # G2P backward: v' = sum w v_i, C' = D sum w v_i dpos^T
    gv_grid = np.zeros((spec.n_nodes, d))
    gC_dpos = np.einsum("nab,snb->sna", gC_new, st.dpos)
    v_nodes = cache.gu.v_out
    for o in range(S):
        idx = st.flat[o]
        np.add.at(gv_grid, idx,
                  st.wo[o][:, None] * (gv_new + D * gC_dpos[o]))
        vi = v_nodes[idx]
        coef = np.einsum("nd,nd->n", vi, gv_new) \
            + D * np.einsum("na,nab,nb->n", vi, gC_new, st.dpos[o])
        gx += coef[:, None] * st.dwo[o]
        # dpos depends on x with d(dpos)/dx = -I
        gx -= (D * st.wo[o])[:, None] * np.einsum("nab,na->nb", gC_new, vi)

    # grid-update backward: clamp, terrain BC, gravity, normalization
    gup = cache.gu
    g = np.where(gup.clamped, 0.0, gv_grid)
    g = _bc_backward(g, gup, bc)
    g[~gup.active] = 0.0
    inv_m = np.zeros_like(cache.grid_mass)
    np.divide(1.0, cache.grid_mass, out=inv_m, where=gup.active)
    gmom = g * inv_m[:, None]
    gmass_node = -np.einsum("nd,nd->n", g, gup.v_raw) * inv_m

    # P2G backward: mom_i = sum w (m v + G dpos), mass_i = sum w m
    gv_p = np.zeros((n, d))
    gG = np.zeros((n, d, d))
    gm = np.zeros(n)
    mv = ps.mass[:, None] * ps.v
    for o in range(S):
        idx = st.flat[o]
        gmo = gmom[idx]
        gmn = gmass_node[idx]
        w = st.wo[o]
        gv_p += (w * ps.mass)[:, None] * gmo
        gG += w[:, None, None] * (gmo[:, :, None] * st.dpos[o][:, None, :])
        gm += w * (np.einsum("nd,nd->n", ps.v, gmo) + gmn)
        mom_contrib = mv + np.einsum("nab,nb->na", cache.G, st.dpos[o])
        coef = np.einsum("nd,nd->n", mom_contrib, gmo) + ps.mass * gmn
        gx += coef[:, None] * st.dwo[o]
        gx -= w[:, None] * np.einsum("nab,na->nb", cache.G, gmo)

    # G = c_G V0 P F^T + m C
    cv = (c_G * ps.volume)[:, None, None]
    gP = cv * (gG @ ps.F)
    gF += cv * (_T(gG) @ cache.P)
    gm += np.einsum("nab,nab->n", gG, ps.C)
    adj.gvol += c_G * np.einsum("nab,nab->n", gG, cache.P @ _T(ps.F))

    # stress and actuation backward
    Fb, sb, ab = total_stress_vjp(ps.F, ps.fiber, ps.stiffness, cache.a,
                                  ps.material_id, materials, gP)
    gF += Fb

    adj.gx = gx
    adj.gv = gv_p
    adj.gF = gF
    adj.gC = ps.mass[:, None, None] * gG
    adj.gs += sb
    adj.gm += gm

    gu = None
    if cache.u is not None:
        gu = ps.muscle.T @ ab
        adj.gmuscle += ab[:, None] * cache.u[None, :]

    if cfg.check_nan and not (np.isfinite(adj.gx).all()
                              and np.isfinite(adj.gv).all()
                              and np.isfinite(adj.gF).all()):
        raise NonFiniteGradient("non-finite state cotangent in backward substep")
    return gu


def _bc_backward(g: np.ndarray, gup: GridUpdate, bc: NodeBC) -> np.ndarray:
    """Cotangent of v_out w.r.t. v_in at every node, per recorded branch."""
    out = g.copy()
    applied = gup.applied

    zero = (applied == APPLIED_STICKY) | (applied == APPLIED_STOP)
    out[zero] = 0.0

    proj = applied == APPLIED_PROJECT
    if proj.any():
        nrm = bc.normal[proj]
        gn = np.einsum("nd,nd->n", out[proj], nrm)
        out[proj] -= nrm * gn[:, None]

    fric = applied == APPLIED_FRICTION
    if fric.any():
        nrm = bc.normal[fric]
        v_in = gup.v_in[fric]
        vn = np.einsum("nd,nd->n", v_in, nrm)
        vt = v_in - nrm * vn[:, None]
        t = np.linalg.norm(vt, axis=1)  # > 0 whenever this branch was taken
        mu = bc.mu[fric]
        s = 1.0 + mu * vn / t
        gf = out[fric]
        gvt = np.einsum("nd,nd->n", gf, vt)
        res = s[:, None] * (gf - nrm * np.einsum("nd,nd->n", gf, nrm)[:, None])
        res += (mu * gvt / t)[:, None] * nrm
        res -= (mu * vn * gvt / t ** 3)[:, None] * vt
        out[fric] = res
    return out
