"""Rollout differentiation: FD oracles, checkpoint transparency, memory."""
import numpy as np
import pytest

from morphosim.autodiff import AdjointState, Objective, Rollout
from morphosim.control import MLPController, SineController
from morphosim.sim import Simulator
from morphosim.state import GridSpec, SimConfig

from conftest import small_block


class GroupCentroidHeight(Objective):
    """loss = mass-weighted centroid height of one muscle group at the end.

    The whole-body centroid is invariant to internal actuation in free
    space (momentum conservation), so rollout grad tests score a subgroup,
    whose height does respond to muscle forces.
    """

    def __init__(self, group=0):
        self.group = group

    def _mask(self, ps):
        return ps.muscle[:, self.group] > 0.5

    def final_term(self, ps):
        m = ps.mass[self._mask(ps)]
        return float(m @ ps.x[self._mask(ps), -1] / m.sum())

    def final_vjp(self, ps, adj):
        sel = self._mask(ps)
        m = ps.mass[sel]
        M = m.sum()
        adj.gx[sel, -1] += m / M
        adj.gm[sel] += (ps.x[sel, -1] - m @ ps.x[sel, -1] / M) / M


class GroupSpeedX(Objective):
    """Running loss: negated mean x-velocity of one group, per substep."""

    def __init__(self, T, group=0):
        self.T = T
        self.group = group

    def step_term(self, ps, t):
        sel = ps.muscle[:, self.group] > 0.5
        m = ps.mass[sel]
        return -float(m @ ps.v[sel, 0] / m.sum()) / self.T

    def step_vjp(self, ps, t, adj):
        sel = ps.muscle[:, self.group] > 0.5
        m = ps.mass[sel]
        M = m.sum()
        adj.gv[sel, 0] -= m / (M * self.T)
        adj.gm[sel] -= (ps.v[sel, 0] - m @ ps.v[sel, 0] / M) / (M * self.T)


def _make_rollout(controller=None, objective=None, **kw):
    # stiffness high enough that every controller-weight gradient sits far
    # above the finite-difference noise floor of the oracle comparisons
    ps, materials = small_block(n_side=3, d=2, stiffness=3000.0)
    spec = GridSpec(dims=(32, 32), dx=1.0 / 32)
    cfg = SimConfig(dt=1e-4, gravity=(0.0, -9.8), substeps_per_control=5)
    sim = Simulator(spec, materials, cfg)
    ro = Rollout(sim, controller, objective or GroupCentroidHeight(), **kw)
    return ps, ro


def test_controller_grad_matches_fd_25_substeps():
    rng = np.random.default_rng(31)
    ctrl = SineController(2)
    ctrl.params = 0.4 * rng.standard_normal(ctrl.n_params)
    ps, ro = _make_rollout(ctrl)
    T = 25

    res = ro.grad(ps, T, N=8)
    got = res.grads["control"].copy()

    h = 1e-5
    p0 = ctrl.params
    fd = np.zeros_like(p0)
    for k in range(p0.size):
        for sgn in (1.0, -1.0):
            ctrl.params = p0 + sgn * h * np.eye(p0.size)[k]
            fd[k] += sgn * ro.forward(ps, T).loss / (2 * h)
    ctrl.params = p0
    denom = np.maximum(np.abs(fd), 1e-3 * np.abs(fd).max())
    assert (np.abs(got - fd) / denom).max() <= 1e-4


def test_stiffness_grad_matches_fd():
    import dataclasses
    rng = np.random.default_rng(33)
    ctrl = SineController(2)
    ctrl.params = 0.4 * rng.standard_normal(ctrl.n_params)
    ps, ro = _make_rollout(ctrl)
    T = 20

    got = ro.grad(ps, T, N=4).grads["stiffness"].copy()

    h = 1e-4  # stiffness is O(500); relative step
    fd = np.zeros(ps.n)
    for k in range(ps.n):
        step = h * max(1.0, ps.stiffness[k])
        for sgn in (1.0, -1.0):
            s2 = ps.stiffness.copy()
            s2[k] += sgn * step
            ps2 = dataclasses.replace(ps, stiffness=s2)
            fd[k] += sgn * ro.forward(ps2, T).loss / (2 * step)
    denom = np.maximum(np.abs(fd), 1e-3 * np.abs(fd).max())
    assert (np.abs(got - fd) / denom).max() <= 1e-4


def test_running_objective_grad_matches_fd():
    rng = np.random.default_rng(35)
    T = 18
    ctrl = SineController(2)
    ctrl.params = 0.5 * rng.standard_normal(ctrl.n_params)
    ps, ro = _make_rollout(ctrl, objective=GroupSpeedX(T))

    got = ro.grad(ps, T, N=7).grads["control"].copy()

    h = 1e-5
    p0 = ctrl.params
    fd = np.zeros_like(p0)
    for k in range(p0.size):
        for sgn in (1.0, -1.0):
            ctrl.params = p0 + sgn * h * np.eye(p0.size)[k]
            fd[k] += sgn * ro.forward(ps, T).loss / (2 * h)
    ctrl.params = p0
    denom = np.maximum(np.abs(fd), 1e-3 * np.abs(fd).max())
    assert (np.abs(got - fd) / denom).max() <= 1e-4


def test_closed_loop_mlp_grad_matches_fd():
    rng = np.random.default_rng(37)

    def obs_fn(ps):
        M = ps.mass.sum()
        return np.concatenate([ps.mass @ ps.x / M, ps.mass @ ps.v / M])

    def obs_vjp(ps, gobs, adj):
        d = ps.dim
        M = ps.mass.sum()
        adj.gx += ps.mass[:, None] * gobs[None, :d] / M
        adj.gv += ps.mass[:, None] * gobs[None, d:] / M
        xc = ps.mass @ ps.x / M
        vc = ps.mass @ ps.v / M
        adj.gm += ((ps.x - xc) @ gobs[:d] + (ps.v - vc) @ gobs[d:]) / M

    ctrl = MLPController(obs_dim=4, n_actuators=2, hidden=6, seed=2)
    ctrl.params = ctrl.params * 0.5
    ps, ro = _make_rollout(ctrl, obs_fn=obs_fn, obs_vjp=obs_vjp)
    T = 15

    got = ro.grad(ps, T, N=6).grads["control"].copy()

    # directional probes: many MLP weights have near-zero individual
    # gradients, so per-coordinate FD would be dominated by rounding noise
    h = 1e-5
    p0 = ctrl.params
    for probe in range(5):
        w = np.random.default_rng(100 + probe).standard_normal(p0.size)
        w /= np.linalg.norm(w)
        ctrl.params = p0 + h * w
        lp = ro.forward(ps, T).loss
        ctrl.params = p0 - h * w
        lm = ro.forward(ps, T).loss
        ctrl.params = p0
        fd = (lp - lm) / (2 * h)
        assert abs(float(got @ w) - fd) <= 1e-5 * max(1e-6, abs(fd)), \
            f"probe {probe}: {got @ w:.3e} vs {fd:.3e}"


def test_checkpoint_interval_transparent_bitwise():
    rng = np.random.default_rng(39)
    ctrl = SineController(2)
    ctrl.params = 0.4 * rng.standard_normal(ctrl.n_params)
    ps, ro = _make_rollout(ctrl)
    T = 64

    results = {}
    for N in [1, 5, 16, 64]:
        res = ro.grad(ps, T, N=N)
        results[N] = res
    ref = results[1]
    for N in [5, 16, 64]:
        r = results[N]
        assert r.loss == ref.loss
        for key in ref.grads:
            assert np.array_equal(r.grads[key], ref.grads[key]), \
                f"grad {key} differs at N={N}"

    # forward-only loss identical to grad-mode loss
    assert ro.forward(ps, T).loss == ref.loss


def test_memory_high_water_mark():
    rng = np.random.default_rng(41)
    ctrl = SineController(2)
    ctrl.params = 0.3 * rng.standard_normal(ctrl.n_params)
    ps, ro = _make_rollout(ctrl)
    T = 64

    peak_full = ro.grad(ps, T, N=1).peak_units
    peak_ckpt = ro.grad(ps, T, N=8).peak_units
    assert peak_ckpt <= int(np.ceil(T / 8)) + 8 + 2
    assert peak_ckpt <= 0.35 * peak_full


def test_adjoint_linearity_and_zero_seed():
    rng = np.random.default_rng(43)
    ctrl = SineController(2)
    ctrl.params = 0.4 * rng.standard_normal(ctrl.n_params)

    class Scaled(GroupCentroidHeight):
        def __init__(self, s):
            super().__init__(group=0)
            self.s = s

        def final_term(self, ps):
            return self.s * super().final_term(ps)

        def final_vjp(self, ps, adj):
            sub = AdjointState.zeros(ps)
            super().final_vjp(ps, sub)
            adj.gx += self.s * sub.gx
            adj.gm += self.s * sub.gm

    ps, _ = _make_rollout(None)
    spec = GridSpec(dims=(32, 32), dx=1.0 / 32)
    cfg = SimConfig(dt=1e-4, gravity=(0.0, -9.8), substeps_per_control=5)
    sim = Simulator(spec, [m for m in _make_rollout(None)[1].sim.materials], cfg)

    g1 = Rollout(sim, ctrl, Scaled(1.0)).grad(ps, 12, N=4).grads
    g3 = Rollout(sim, ctrl, Scaled(3.0)).grad(ps, 12, N=4).grads
    for key in g1:
        assert np.allclose(g3[key], 3.0 * g1[key], rtol=1e-12, atol=1e-18)

    class ZeroObjective(Objective):
        pass

    g0 = Rollout(sim, ctrl, ZeroObjective()).grad(ps, 12, N=4).grads
    for key, val in g0.items():
        assert np.all(val == 0.0), f"{key} nonzero under zero seed"
