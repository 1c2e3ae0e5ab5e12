"""Controller contracts: bounds, linearity, serialization, and VJPs."""
import numpy as np
import pytest

from morphosim.control import (MLPController, OpenLoopTable, SineController,
                               controller_from_json, particle_actuation)


def test_sine_zero_params_zero_output():
    c = SineController(3)
    for t in [0.0, 0.013, 1.7]:
        assert np.all(c(0, t) == 0.0)


def test_sine_bound_holds_everywhere():
    rng = np.random.default_rng(5)
    c = SineController(4)
    for _ in range(200):
        c.params = 10.0 * rng.standard_normal(c.n_params)
        u = c(0, float(rng.uniform(0, 10)))
        assert np.all(np.abs(u) <= 0.3 + 1e-15)


def test_sine_periodic_common_period():
    # omega = {20, 80} rad/s share the period 2 pi / 20
    rng = np.random.default_rng(6)
    c = SineController(2)
    c.params = rng.standard_normal(c.n_params)
    period = 2.0 * np.pi / 20.0
    for t in np.linspace(0.0, 0.3, 50):
        assert np.allclose(c(0, t), c(0, t + period), atol=1e-12)


def test_sine_backward_matches_fd():
    rng = np.random.default_rng(7)
    c = SineController(2)
    c.params = 0.5 * rng.standard_normal(c.n_params)
    t = 0.037
    gu = rng.standard_normal(2)
    c.zero_grad()
    c.backward(0, t, gu)
    got = c.grad

    h = 1e-7
    p0 = c.params
    fd = np.zeros_like(p0)
    for k in range(p0.size):
        for sgn in (1.0, -1.0):
            c.params = p0 + sgn * h * np.eye(p0.size)[k]
            fd[k] += sgn * float(gu @ c(0, t)) / (2 * h)
    c.params = p0
    assert np.abs(got - fd).max() <= 1e-7


def test_sine_learn_basis_backward_matches_fd():
    rng = np.random.default_rng(17)
    c = SineController(2, learn_basis=True)
    c.params = np.concatenate([0.5 * rng.standard_normal(32),
                               [20.0, 80.0], [0.0, 1.5, 3.0, 4.5]])
    t = 0.021
    gu = rng.standard_normal(2)
    c.zero_grad()
    c.backward(0, t, gu)
    got = c.grad

    h = 1e-6
    p0 = c.params
    fd = np.zeros_like(p0)
    for k in range(p0.size):
        for sgn in (1.0, -1.0):
            c.params = p0 + sgn * h * np.eye(p0.size)[k]
            fd[k] += sgn * float(gu @ c(0, t)) / (2 * h)
    c.params = p0
    assert np.abs(got - fd).max() <= 1e-6


def test_sine_json_round_trip():
    rng = np.random.default_rng(8)
    c = SineController(3)
    c.params = rng.standard_normal(c.n_params)
    c2 = controller_from_json(c.to_json())
    assert np.allclose(c2.params, c.params, atol=0)
    for t in [0.0, 0.4]:
        assert np.array_equal(c(0, t), c2(0, t))


def test_open_loop_table_bound_and_backward():
    rng = np.random.default_rng(9)
    tab = OpenLoopTable(5, 2, raw=rng.standard_normal((5, 2)) * 3.0)
    for s in range(7):  # beyond-table steps hold the last entry
        assert np.all(np.abs(tab(s, 0.0)) <= 0.3)
    assert np.array_equal(tab(6, 0.0), tab(4, 0.0))

    gu = rng.standard_normal(2)
    tab.zero_grad()
    tab.backward(2, 0.0, gu)
    h = 1e-7
    p0 = tab.params
    fd = np.zeros_like(p0)
    for k in range(p0.size):
        for sgn in (1.0, -1.0):
            tab.params = p0 + sgn * h * np.eye(p0.size)[k]
            fd[k] += sgn * float(gu @ tab(2, 0.0)) / (2 * h)
    tab.params = p0
    assert np.abs(tab.grad - fd).max() <= 1e-7

    tab2 = controller_from_json(tab.to_json())
    assert np.allclose(tab2.params, tab.params, atol=0)


def test_mlp_backward_matches_fd_params_and_obs():
    rng = np.random.default_rng(10)
    c = MLPController(obs_dim=4, n_actuators=2, hidden=8, seed=3)
    obs = rng.standard_normal(4)
    gu = rng.standard_normal(2)
    c.zero_grad()
    gobs = c.backward(0, 0.0, gu, obs)

    h = 1e-6
    p0 = c.params
    fd = np.zeros_like(p0)
    for k in range(p0.size):
        for sgn in (1.0, -1.0):
            c.params = p0 + sgn * h * np.eye(p0.size)[k]
            fd[k] += sgn * float(gu @ c(0, 0.0, obs)) / (2 * h)
    c.params = p0
    assert np.abs(c.grad - fd).max() <= 5e-6

    fd_obs = np.zeros(4)
    for k in range(4):
        op = obs.copy(); op[k] += h
        om = obs.copy(); om[k] -= h
        fd_obs[k] = float(gu @ (c(0, 0.0, op) - c(0, 0.0, om))) / (2 * h)
    assert np.abs(gobs - fd_obs).max() <= 5e-6

    c2 = controller_from_json(c.to_json())
    assert np.allclose(c2.params, c.params, atol=0)


def test_particle_actuation_linear_and_one_hot():
    rng = np.random.default_rng(11)
    r = rng.uniform(0, 1, (6, 3))
    u = rng.standard_normal(3)
    a = particle_actuation(u, r)
    assert np.allclose(particle_actuation(2.5 * u, r), 2.5 * a)

    one_hot = np.zeros((4, 3))
    one_hot[:, 1] = 1.0
    assert np.allclose(particle_actuation(u, one_hot), u[1])

    uniform = np.full((4, 3), 1.0 / 3.0)
    assert np.allclose(particle_actuation(u, uniform), u.mean())

    assert np.all(particle_actuation(np.zeros(3), r) == 0.0)
