"""Canonical desk-scale scenes shared by the CLI and the test suite.

Everything here is deliberately small: a handful of robot particles on a
32-cell grid, episodes of a few hundred substeps. The constructors return
ready-to-run bundles so gradient checks, settling runs, co-design studies,
landscape sweeps, and ambiguity experiments all draw from one set of
configurations instead of each entry point growing its own.
"""
from __future__ import annotations

import numpy as np

from .autodiff.rollout import Objective, Rollout
from .biomes import BiomeSpec, get_biome
from .control import SineController
from .design.base import BaseParticles, DesignSpec, Workspace
from .design.decoders import ImplicitMLP, PerParticle
from .design.primitives import DesignPrimitive, SDFLerp
from .optimize.analysis import AmbiguityConfig
from .optimize.runner import CodesignProblem
from .scene import assemble_scene
from .sim import Simulator
from .state import GridSpec, SimConfig
from .tasks import SpeedTask

DX = 1.0 / 32


class CentroidHeight(Objective):
    """Final mass-weighted centroid height of the robot body."""

    def final_term(self, ps):
        sel = ps.robot
        m = ps.mass[sel]
        return float(m @ ps.x[sel, -1] / m.sum())

    def final_vjp(self, ps, adj):
        sel = ps.robot
        m = ps.mass[sel]
        M = m.sum()
        h = m @ ps.x[sel, -1] / M
        adj.gx[sel, -1] += m / M
        adj.gm[sel] += (ps.x[sel, -1] - h) / M


def block_design(n_side=4, dim=2, spacing=DX / 2, rho=1000.0,
                 stiffness=500.0, s0=1000.0, n_actuators=2, split_axis=0,
                 fiber_axis=-1) -> DesignSpec:
    """A solid lattice block centered at the origin.

    Membership splits the block into n_actuators equal slabs along
    split_axis; fibers all point along fiber_axis. Place it with
    assemble_scene's placement argument.
    """
    axes = [np.arange(n_side) * spacing for _ in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    x = np.stack([m.ravel() for m in mesh], axis=1)
    x -= x.mean(axis=0)
    n = x.shape[0]
    vol = spacing ** dim
    groups = np.minimum((x[:, split_axis] - x[:, split_axis].min())
                        / (n_side * spacing) * n_actuators,
                        n_actuators - 1).astype(int)
    r = np.zeros((n, n_actuators))
    r[np.arange(n), groups] = 1.0
    f = np.zeros((n, dim))
    f[:, fiber_axis] = 1.0
    return DesignSpec(x=x, m=np.full(n, rho * vol),
                      s=np.full(n, float(stiffness)), r=r, f=f, volume=vol,
                      m0=rho * vol, s0=float(s0))


def _flat_scene(design, biome, dims=(32, 32), seed=0, gap=0.0, x_frac=0.5):
    """Place a design resting on flat terrain; returns the Scene."""
    spec = GridSpec(dims=dims, dx=DX)
    base_h = 0.1
    lo = design.x[:, -1].min()
    place = np.full(design.x.shape[1], 0.0)
    place[:-1] = x_frac * dims[0] * DX
    place[-1] = base_h - lo + DX / 4 + gap
    return assemble_scene(biome, design, spec, seed=seed, placement=place), spec


def grad_probe(n_side=4, T=25, stiffness=2000.0, seed=0):
    """Gradient-check rig: a block on sticky ground under a sine gait.

    Returns (ps0, rollout, T). The loss is the final centroid height, which
    responds to actuation only through ground contact, so the probe
    exercises the full contact-coupled chain.
    """
    design = block_design(n_side=n_side, stiffness=stiffness)
    scene, spec = _flat_scene(design, get_biome("Ground"))
    cfg = SimConfig(dt=1e-4, substeps_per_control=5, gravity=(0.0, -9.8))
    sim = Simulator(spec, scene.materials, cfg, scene.terrain)
    rng = np.random.default_rng(seed)
    ctrl = SineController(design.n_actuators, rng=rng, init_scale=0.4)
    return scene.ps, Rollout(sim, ctrl, CentroidHeight()), T


def run_gradcheck(h=1e-5, T=25, n_side=4):
    """Adjoint-vs-finite-difference sweep over the grad_probe scene.

    Checks every controller weight (absolute step h) and every robot
    particle's stiffness (relative step h, comparing s_i-scaled
    cotangents so the probe is conditioned the same for 1e3-scale
    stiffness as for O(1) weights). Returns a report dict; the headline
    number is max_rel_err.
    """
    ps0, roll, T = grad_probe(n_side=n_side, T=T)
    result = roll.grad(ps0, T, N=min(16, T))
    ctrl = roll.controller
    g_ctrl = result.grads["control"]
    g_s = result.grads["stiffness"]

    def rel(adj, fd):
        return abs(adj - fd) / max(abs(fd), 1e-10)

    p0 = ctrl.params
    ctrl_errs = np.zeros(p0.size)
    for i in range(p0.size):
        sides = []
        for sgn in (1.0, -1.0):
            p = p0.copy()
            p[i] += sgn * h
            ctrl.params = p
            sides.append(roll.forward(ps0, T).loss)
        fd = (sides[0] - sides[1]) / (2.0 * h)
        ctrl_errs[i] = rel(g_ctrl[i], fd)
    ctrl.params = p0

    stiff_errs = np.zeros(ps0.n)
    for i in range(ps0.n):
        sides = []
        for sgn in (1.0, -1.0):
            ps = ps0.copy()
            ps.stiffness[i] *= 1.0 + sgn * h
            sides.append(roll.forward(ps, T).loss)
        fd = (sides[0] - sides[1]) / (2.0 * h)
        stiff_errs[i] = rel(g_s[i] * ps0.stiffness[i], fd)

    return {
        "loss": result.loss,
        "n_controller_params": int(p0.size),
        "n_stiffness_params": int(ps0.n),
        "max_rel_err_controller": float(ctrl_errs.max()),
        "max_rel_err_stiffness": float(stiff_errs.max()),
        "max_rel_err": float(max(ctrl_errs.max(), stiff_errs.max())),
    }


def settling_scene(biome_name="Ground", n_side=6, stiffness=500.0):
    """An unactuated elastic block resting on flat terrain.

    Returns (sim, ps0). Stepping with u=None lets it relax under gravity.
    """
    design = block_design(n_side=n_side, stiffness=stiffness)
    scene, spec = _flat_scene(design, get_biome(biome_name))
    cfg = SimConfig(dt=1e-4, gravity=(0.0, -9.8))
    sim = Simulator(spec, scene.materials, cfg, scene.terrain)
    return sim, scene.ps


# ---------------------------------------------------------------------------
# two-muscle walker: landscape sweeps and ambiguity rigs


def _box_sdf(x, lo, hi):
    """Signed distance to an axis-aligned box (exact outside, -inf norm inside)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    c = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    q = np.abs(x - c) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    return outside + inside


def walker_base(n_x=10, n_y=4, spacing=DX / 2, rho=1000.0, s0=1500.0):
    """Base lattice for the walker: a wide, low slab centered at the origin."""
    xs = np.arange(n_x) * spacing
    ys = np.arange(n_y) * spacing
    mesh = np.meshgrid(xs - xs.mean(), ys - ys.mean(), indexing="ij")
    x = np.stack([m.ravel() for m in mesh], axis=1)
    return BaseParticles(x=x, volume=spacing ** 2, m0=rho * spacing ** 2,
                         s0=s0)


def walker_primitives(base, stiffness=900.0):
    """Two primitives over the full slab differing only in which half
    belongs to which muscle; mixing them sweeps the actuator boundary."""
    lo = base.x.min(axis=0) - 1e-6
    hi = base.x.max(axis=0) + 1e-6
    sdf = _box_sdf(base.x, lo, hi)
    s = np.full(base.n, float(stiffness))
    front = base.x[:, 0] > 0.0
    r_a = np.zeros((base.n, 2))
    r_a[front, 0] = 1.0
    r_a[~front, 1] = 1.0
    r_b = r_a[:, ::-1].copy()
    f = np.full((base.n, 1), np.pi / 2)  # vertical fibers
    return [DesignPrimitive(sdf=sdf, s=s, r=r_a, f_euler=f.copy()),
            DesignPrimitive(sdf=sdf, s=s, r=r_b, f_euler=f.copy())]


def walker_problem(T=600, seed=0, ctrl_scale=0.6, omegas=(30.0, 60.0)):
    """Ground walker driven by an antiphase-capable sine gait.

    The decoder is an SDF blend of the two mirrored-membership primitives,
    so gamma coordinates move actuation between the halves of the body.
    """
    base = walker_base()
    prims = walker_primitives(base)
    dec = SDFLerp.uniform(2)
    biome = get_biome("Ground")
    spec = GridSpec(dims=(32, 32), dx=DX)
    cfg = SimConfig(dt=1e-4, substeps_per_control=20, gravity=(0.0, -9.8))
    lo = base.x[:, -1].min()
    placement = np.array([0.35, 0.1 - lo + DX / 4])
    task = SpeedTask(direction=(1.0, 0.0))

    def make_controller(s):
        rng = np.random.default_rng(s)
        return SineController(2, omegas=omegas, rng=rng,
                              init_scale=ctrl_scale)

    return CodesignProblem(base=base, decoder=dec, primitives=prims,
                           biome=biome, spec=spec, cfg=cfg,
                           objective=task.objective(cfg.dt),
                           make_controller=make_controller, T=T,
                           placement=placement, scene_seed=seed)


def walker_sweep(n_points=64, lo=0.02, hi=0.98, seed=0, T=600):
    """Actuator-placement landscape: sweep the membership mix of the two
    walker primitives with the gait fixed.

    Returns (problem, controller, index, grid) for design_axis + sweep_1d.
    The swept coordinate is the first gamma entry; with gamma's second
    entry pinned at 1 the grid value g places a fraction g/(g+1)... of the
    body under the leading muscle. The grid spans near-total handoff in
    both directions.
    """
    problem = walker_problem(T=T, seed=seed)
    controller = problem.make_controller(seed)
    # vector layout: alpha[0:2], beta[2:4], gamma[4:6], kappa[6:8]
    index = 4
    grid = np.linspace(lo, hi, n_points)
    vec = problem.decoder.vector
    vec[5] = 0.5  # fixed counterweight so the sweep crosses the 50/50 mix
    problem.decoder = problem.decoder.with_vector(vec)
    return problem, controller, index, grid


# ---------------------------------------------------------------------------
# aquatic swimmer: co-design orderings


def swimmer_base(n_x=14, n_y=6, spacing=DX / 2, rho=1000.0, s0=1500.0):
    """Base lattice for the swimmer: an elongated slab."""
    return walker_base(n_x=n_x, n_y=n_y, spacing=spacing, rho=rho, s0=s0)


def swimmer_primitives(base, stiffness=900.0):
    """Body-shape basis for the swimmer: a full slab and a tapered tail
    shape, both split front/back into two muscles with horizontal fibers."""
    lo = base.x.min(axis=0)
    hi = base.x.max(axis=0)
    pad = 1e-6
    full = _box_sdf(base.x, lo - pad, hi + pad)
    # tapered variant: thinner rear half
    taper = np.where(base.x[:, 0] > 0.0, 0.45 * (hi[1] - lo[1]), 0.0)
    hi_t = np.tile(hi + pad, (base.n, 1))
    lo_t = np.tile(lo - pad, (base.n, 1))
    hi_t[:, 1] -= taper / 2
    lo_t[:, 1] += taper / 2
    q = np.abs(base.x - (lo_t + hi_t) / 2) - (hi_t - lo_t) / 2
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    tapered = outside + np.minimum(q.max(axis=1), 0.0)

    s = np.full(base.n, float(stiffness))
    front = base.x[:, 0] > 0.0
    r = np.zeros((base.n, 2))
    r[front, 0] = 1.0
    r[~front, 1] = 1.0
    f = np.zeros((base.n, 1))  # horizontal fibers: contract along the body
    return [DesignPrimitive(sdf=full, s=s, r=r, f_euler=f.copy()),
            DesignPrimitive(sdf=tapered, s=s, r=r.copy(), f_euler=f.copy())]


REPRESENTATIONS = ("sdflerp", "implicit", "particle")


def swimmer_problem(representation="sdflerp", T=300, seed=0,
                    ctrl_scale=0.5, water_depth=0.35):
    """2D aquatic co-design scene; the representation picks the decoder."""
    base = swimmer_base()
    prims = None
    if representation == "sdflerp":
        dec = SDFLerp.uniform(2)
        prims = swimmer_primitives(base)
    elif representation == "implicit":
        dec = ImplicitMLP(dim=2, k=2, hidden=8, seed=7,
                          center=base.x.mean(axis=0))
    elif representation == "particle":
        dec = PerParticle.zeros(base.n, 2)
    else:
        raise ValueError(f"unknown representation {representation!r}; "
                         f"expected one of {REPRESENTATIONS}")
    biome = BiomeSpec("Ocean", bc="sticky", water_depth=water_depth)
    spec = GridSpec(dims=(32, 32), dx=DX)
    cfg = SimConfig(dt=1e-4, substeps_per_control=20, gravity=(0.0, -9.8))
    placement = np.array([0.35, 0.28])
    task = SpeedTask(direction=(1.0, 0.0))

    def make_controller(s):
        rng = np.random.default_rng(s)
        return SineController(2, rng=rng, init_scale=ctrl_scale)

    return CodesignProblem(base=base, decoder=dec, primitives=prims,
                           biome=biome, spec=spec, cfg=cfg,
                           objective=task.objective(cfg.dt),
                           make_controller=make_controller, T=T,
                           placement=placement, scene_seed=seed)


# ---------------------------------------------------------------------------
# ambiguity rigs


def slab_design(n_x=10, n_y=4, n_actuators=2, stiffness=700.0,
                spacing=DX / 2, rho=1000.0) -> DesignSpec:
    """A wide, low slab split into vertical-fibered muscle slabs along x;
    the reference robot for the ambiguity studies."""
    xs = np.arange(n_x) * spacing
    ys = np.arange(n_y) * spacing
    mesh = np.meshgrid(xs - xs.mean(), ys - ys.mean(), indexing="ij")
    x = np.stack([m.ravel() for m in mesh], axis=1)
    n = x.shape[0]
    vol = spacing ** 2
    groups = np.minimum((x[:, 0] - x[:, 0].min()) / (n_x * spacing)
                        * n_actuators, n_actuators - 1).astype(int)
    r = np.zeros((n, n_actuators))
    r[np.arange(n), groups] = 1.0
    f = np.zeros((n, 2))
    f[:, 1] = 1.0
    return DesignSpec(x=x, m=np.full(n, rho * vol),
                      s=np.full(n, float(stiffness)), r=r, f=f, volume=vol,
                      m0=rho * vol, s0=3000.0)


def ambiguity_config(frames=10, n_seeds=5, fit_iters=25, lr=0.05, seed=0):
    """Shared rig for both ambiguity variants: slab on sticky ground."""
    design = slab_design()
    spec = GridSpec(dims=(32, 32), dx=DX)
    lo = design.x[:, -1].min()
    placement = np.array([0.5, 0.1 - lo + DX / 4])
    cfg = SimConfig(dt=1e-4, substeps_per_control=20, gravity=(0.0, -9.8))
    return AmbiguityConfig(design=design, biome=get_biome("Ground"),
                           spec=spec, cfg=cfg, frames=frames,
                           n_seeds=n_seeds, fit_iters=fit_iters, lr=lr,
                           seed=seed, placement=placement)
