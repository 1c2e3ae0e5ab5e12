"""Reward oracles, quintic path properties, heading de-rotation, EMD."""
import dataclasses

import numpy as np
import pytest

from morphosim.autodiff import AdjointState
from morphosim.errors import (CoincidentMarkers, ConfigError, EmptyRobot,
                              SizeMismatch)
from morphosim.tasks import (FinalShapeEMD, QuinticPath, SpeedObjective,
                             SpeedTask, TurningObjective, TurningTask,
                             VelocityTrackingTask, WaypointObjective,
                             WaypointTask, emd_loss, emd_vjp, estimate_heading,
                             derotated_velocities, quintic_fit, reward_speed,
                             reward_turning, reward_velocity_tracking,
                             reward_waypoint, write_reward_log)
from tests.conftest import small_block


def block(d=2, n_side=3, **kw):
    kw.setdefault("center", (0.5,) * d)
    ps, _ = small_block(n_side=n_side, d=d, **kw)
    return ps


def with_v(ps, v):
    return dataclasses.replace(ps, v=np.broadcast_to(v, ps.x.shape).copy())


# ---------------------------------------------------------------- quintic


def test_quintic_constant_path():
    p = quintic_fit([0.3, 0.4], [0, 0], [0, 0], [0.3, 0.4], [0, 0], [0, 0], 2.0)
    np.testing.assert_allclose(p.c[0], [0.3, 0.4])
    np.testing.assert_allclose(p.c[1:], 0.0, atol=1e-12)
    np.testing.assert_allclose(p.position(1.3), [0.3, 0.4])


def test_quintic_boundary_residuals_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        xs, vs, accs, xt, vt, at = rng.standard_normal((6, 3))
        T = float(rng.uniform(0.2, 5.0))
        p = quintic_fit(xs, vs, accs, xt, vt, at, T)
        np.testing.assert_allclose(p.position(0.0), xs, atol=1e-9)
        np.testing.assert_allclose(p.velocity(0.0), vs, atol=1e-9)
        np.testing.assert_allclose(p.acceleration(0.0), accs, atol=1e-9)
        np.testing.assert_allclose(p.position(T), xt, atol=1e-9)
        np.testing.assert_allclose(p.velocity(T), vt, atol=1e-9)
        np.testing.assert_allclose(p.acceleration(T), at, atol=1e-9)


def test_quintic_velocity_matches_numeric_derivative():
    rng = np.random.default_rng(1)
    p = quintic_fit(rng.standard_normal(2), rng.standard_normal(2),
                    rng.standard_normal(2), rng.standard_normal(2),
                    rng.standard_normal(2), rng.standard_normal(2), 1.5)
    h = 1e-6
    for t in np.linspace(0.05, 1.45, 17):
        fd = (p.position(t + h) - p.position(t - h)) / (2 * h)
        np.testing.assert_allclose(p.velocity(t), fd, atol=1e-7)
        fd2 = (p.velocity(t + h) - p.velocity(t - h)) / (2 * h)
        np.testing.assert_allclose(p.acceleration(t), fd2, atol=1e-6)


def test_quintic_waypoints_and_bad_horizon():
    p = quintic_fit([0.0], [1.0], [0.0], [2.0], [1.0], [0.0], 2.0)
    wps = p.waypoints(5)
    np.testing.assert_allclose(wps[:, 0], [0.0, 0.5, 1.0, 1.5, 2.0], atol=1e-9)
    with pytest.raises(ConfigError):
        quintic_fit([0.0], [0.0], [0.0], [1.0], [0.0], [0.0], 0.0)


# ---------------------------------------------------------------- rewards


def test_reward_speed_trivial_cases():
    ps = block()
    t_hat = np.array([1.0, 0.0])
    assert reward_speed(ps, t_hat) == 0.0
    assert reward_speed(with_v(ps, t_hat), t_hat) == pytest.approx(1.0)
    assert reward_speed(with_v(ps, -t_hat), t_hat) == pytest.approx(-1.0)


def test_reward_speed_mass_rescaling_invariant():
    rng = np.random.default_rng(2)
    ps = block()
    ps = dataclasses.replace(ps, v=rng.standard_normal(ps.x.shape))
    r1 = reward_speed(ps, [0.6, 0.8])
    ps2 = dataclasses.replace(ps, mass=ps.mass * 7.5)
    assert reward_speed(ps2, [0.6, 0.8]) == pytest.approx(r1, rel=1e-12)


def test_reward_turning_rigid_rotation_2d():
    # ring of particles at radius rho, rigid CCW rotation omega -> omega*rho
    rho, omega = 0.07, 3.0
    ang = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    x = 0.5 + rho * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    ps = block()
    n = len(x)
    ps = dataclasses.replace(
        block(n_side=2),
        x=x, v=omega * rho * np.stack([-np.sin(ang), np.cos(ang)], axis=1),
        mass=np.full(n, 2.0), F=np.tile(np.eye(2), (n, 1, 1)),
        C=np.zeros((n, 2, 2)), stiffness=np.zeros(n),
        muscle=np.zeros((n, 1)), fiber=np.tile([1.0, 0.0], (n, 1)),
        material_id=np.zeros(n, dtype=np.int64), volume=np.full(n, 1e-5),
        robot=np.ones(n, dtype=bool), design_index=np.arange(n))
    assert reward_turning(ps, 1.0) == pytest.approx(omega * rho, rel=1e-12)
    assert reward_turning(ps, -1.0) == pytest.approx(-omega * rho, rel=1e-12)
    # purely radial motion scores zero
    radial = dataclasses.replace(ps, v=ps.x - ps.x.mean(axis=0))
    assert reward_turning(radial, 1.0) == pytest.approx(0.0, abs=1e-15)
    # static robot
    assert reward_turning(dataclasses.replace(ps, v=0 * ps.v), 1.0) == 0.0


def test_reward_turning_rigid_rotation_3d():
    rho, omega = 0.05, 2.0
    d = np.array([0.0, 0.0, 1.0])
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    x = 0.5 + rho * np.stack([np.cos(ang), np.sin(ang), 0 * ang], axis=1)
    v = omega * np.cross(d, x - x.mean(axis=0))
    ps = block(d=3, n_side=2)
    n = len(x)
    ps = dataclasses.replace(
        ps, x=x, v=v, mass=np.full(n, 1.0),
        F=np.tile(np.eye(3), (n, 1, 1)), C=np.zeros((n, 3, 3)),
        stiffness=np.zeros(n), muscle=np.zeros((n, 1)),
        fiber=np.tile([1.0, 0, 0], (n, 1)),
        material_id=np.zeros(n, dtype=np.int64), volume=np.full(n, 1e-5),
        robot=np.ones(n, dtype=bool), design_index=np.arange(n))
    assert reward_turning(ps, d) == pytest.approx(omega * rho, rel=1e-12)
    # a particle on the axis contributes zero rather than NaN
    x2 = np.vstack([x, x.mean(axis=0)])
    ps2 = dataclasses.replace(
        ps, x=x2, v=np.vstack([v, [1.0, 0, 0]]), mass=np.full(n + 1, 1.0),
        F=np.tile(np.eye(3), (n + 1, 1, 1)), C=np.zeros((n + 1, 3, 3)),
        stiffness=np.zeros(n + 1), muscle=np.zeros((n + 1, 1)),
        fiber=np.tile([1.0, 0, 0], (n + 1, 1)),
        material_id=np.zeros(n + 1, dtype=np.int64),
        volume=np.full(n + 1, 1e-5), robot=np.ones(n + 1, dtype=bool),
        design_index=np.arange(n + 1))
    assert np.isfinite(reward_turning(ps2, d))
    assert reward_turning(ps2, d) == pytest.approx(omega * rho * n / (n + 1),
                                                   rel=1e-12)


def test_empty_robot_raises():
    ps = block()
    ps = dataclasses.replace(ps, robot=np.zeros(ps.n, dtype=bool))
    with pytest.raises(EmptyRobot):
        reward_speed(ps, [1.0, 0.0])


# ------------------------------------------------------- heading / tracking


def rot2(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def test_estimate_heading_undeformed():
    ps = block()
    head = np.argmax(ps.x[:, 0])
    tail = np.argmin(ps.x[:, 0])
    d = estimate_heading(ps, head, tail)
    np.testing.assert_allclose(np.linalg.norm(d), 1.0, atol=1e-12)
    want = ps.x[head] - ps.x[tail]
    np.testing.assert_allclose(d, want / np.linalg.norm(want))
    # F = I leaves velocities unchanged
    rng = np.random.default_rng(3)
    ps = dataclasses.replace(ps, v=rng.standard_normal(ps.x.shape))
    np.testing.assert_allclose(derotated_velocities(ps), ps.v, atol=1e-12)
    with pytest.raises(CoincidentMarkers):
        estimate_heading(ps, head, head)


def test_derotation_of_rigidly_rotated_body():
    rng = np.random.default_rng(4)
    ps = block()
    R0 = rot2(0.7)
    ps = dataclasses.replace(ps, v=rng.standard_normal(ps.x.shape),
                             F=np.tile(R0, (ps.n, 1, 1)))
    np.testing.assert_allclose(derotated_velocities(ps), ps.v @ R0,
                               atol=1e-12)  # (R0^T v)_j = v_i R0_ij


def _marked_block(vx):
    ps = block()
    head = int(np.argmax(ps.x[:, 0]))
    tail = int(np.argmin(ps.x[:, 0]))
    ps = with_v(ps, [vx, 0.0])
    return ps, head, tail


def test_velocity_tracking_matched_speed():
    # straight constant-velocity path is an exact quintic
    v = np.array([0.4, 0.0])
    path = quintic_fit([0, 0], v, [0, 0], 2.0 * v, v, [0, 0], 2.0)
    np.testing.assert_allclose(path.velocity(0.77), v, atol=1e-12)
    ps, head, tail = _marked_block(0.4)
    r = reward_velocity_tracking(ps, path, 0.77, head, tail)
    assert r == pytest.approx(0.9 * np.linalg.norm(v), abs=1e-12)


def test_velocity_tracking_at_rest():
    v = np.array([0.4, 0.0])
    path = quintic_fit([0, 0], v, [0, 0], 2.0 * v, v, [0, 0], 2.0)
    ps, head, tail = _marked_block(0.0)
    r = reward_velocity_tracking(ps, path, 1.0, head, tail)
    assert r == pytest.approx(0.1 * -(np.linalg.norm(v) ** 2), abs=1e-12)


def test_velocity_tracking_default_weights():
    t = VelocityTrackingTask(path=quintic_fit([0], [1], [0], [2], [1], [0], 2.0),
                             head=0, tail=1)
    assert (t.alpha_mag, t.alpha_dir) == (0.1, 0.9)


# ---------------------------------------------------------------- waypoint


def test_reward_waypoint_values():
    ps = block()
    m = ps.mass
    centroid = m @ ps.x / m.sum()
    assert reward_waypoint(ps, centroid) == pytest.approx(0.0, abs=1e-15)
    off = centroid + [0.6, 0.8]  # unit distance
    assert reward_waypoint(ps, off) == pytest.approx(-1.0, rel=1e-12)
    rng = np.random.default_rng(5)
    for _ in range(20):
        assert reward_waypoint(ps, rng.standard_normal(2)) <= 0.0


# ---------------------------------------------------------------- EMD


def test_emd_trivial_and_errors():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((17, 2))
    assert emd_loss(A, A.copy()) == pytest.approx(0.0, abs=1e-12)
    a, b = np.array([[0.2, 0.3]]), np.array([[1.2, -0.4]])
    assert emd_loss(a, b) == pytest.approx(np.sum((a - b) ** 2), rel=1e-12)
    with pytest.raises(SizeMismatch):
        emd_loss(A, A[:5])


def test_emd_symmetry_and_permutation_invariance():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((24, 3))
    B = rng.standard_normal((24, 3))
    v = emd_loss(A, B)
    assert emd_loss(B, A) == pytest.approx(v, rel=1e-12)
    perm = rng.permutation(24)
    assert emd_loss(A[perm], B) == pytest.approx(v, rel=1e-12)
    assert emd_loss(A, B[perm]) == pytest.approx(v, rel=1e-12)


def test_emd_sinkhorn_close_to_exact():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(10):
        A = rng.uniform(0, 1, size=(32, 2))
        B = rng.uniform(0, 1, size=(32, 2))
        exact = emd_loss(A, B, method="exact")
        approx = emd_loss(A, B, method="sinkhorn")
        worst = max(worst, abs(approx - exact) / exact)
    assert worst <= 0.05


def test_emd_vjp_exact_matches_fd():
    rng = np.random.default_rng(9)
    A = rng.uniform(0, 1, size=(12, 2))
    B = rng.uniform(0, 1, size=(12, 2))
    info = {}
    emd_loss(A, B, method="exact", info=info)
    g = emd_vjp(A, B, info)
    h = 1e-6
    fd = np.zeros_like(A)
    for k in range(A.size):
        dp = np.zeros(A.size)
        dp[k] = h
        fd.reshape(-1)[k] = (emd_loss(A + dp.reshape(A.shape), B)
                             - emd_loss(A - dp.reshape(A.shape), B)) / (2 * h)
    # the optimal assignment is locally constant almost everywhere
    assert np.abs(g - fd).max() <= 2e-5


def test_emd_vjp_sinkhorn_is_dual_gradient():
    rng = np.random.default_rng(9)
    A = rng.uniform(0, 1, size=(10, 2))
    B = rng.uniform(0, 1, size=(10, 2))
    info = {}
    emd_loss(A, B, method="sinkhorn", info=info)
    g = emd_vjp(A, B, info)
    eps = info["eps"]  # pin eps so FD does not see the auto-eps shift

    def dual(q):
        i = {}
        emd_loss(q, B, method="sinkhorn", eps=eps, info=i)
        return i["dual"]

    h = 1e-5
    fd = np.zeros_like(A)
    for k in range(A.size):
        dp = np.zeros(A.size)
        dp[k] = h
        fd.reshape(-1)[k] = (dual(A + dp.reshape(A.shape))
                             - dual(A - dp.reshape(A.shape))) / (2 * h)
    scale = np.abs(fd).max()
    assert np.abs(g - fd).max() <= 2e-3 * scale
    # and it still points the right way for the sharp cost
    fd_sharp = np.zeros_like(A)
    for k in range(A.size):
        dp = np.zeros(A.size)
        dp[k] = h
        fd_sharp.reshape(-1)[k] = (
            emd_loss(A + dp.reshape(A.shape), B, method="sinkhorn", eps=eps)
            - emd_loss(A - dp.reshape(A.shape), B, method="sinkhorn",
                       eps=eps)) / (2 * h)
    cos = (g.ravel() @ fd_sharp.ravel()) / (
        np.linalg.norm(g) * np.linalg.norm(fd_sharp))
    assert cos >= 0.99


# ------------------------------------------------------------- objectives


def _random_state(seed=0):
    rng = np.random.default_rng(seed)
    ps = block()
    return dataclasses.replace(
        ps, v=0.3 * rng.standard_normal(ps.x.shape),
        mass=ps.mass * rng.uniform(0.5, 1.5, ps.n))


def _check_objective_fd(obj, ps, fields=("x", "v", "mass"), t=0, tol=1e-7):
    adj = AdjointState.zeros(ps)
    obj.step_vjp(ps, t, adj)
    obj.final_vjp(ps, adj)

    def loss(q):
        return obj.step_term(q, t) + obj.final_term(q)

    got = {"x": adj.gx, "v": adj.gv, "mass": adj.gm}
    h = 1e-6
    for name in fields:
        base = getattr(ps, name)
        fd = np.zeros_like(base)
        for k in range(base.size):
            dp = np.zeros(base.size)
            dp[k] = h
            pp = dataclasses.replace(ps, **{name: base + dp.reshape(base.shape)})
            pm = dataclasses.replace(ps, **{name: base - dp.reshape(base.shape)})
            fd.reshape(-1)[k] = (loss(pp) - loss(pm)) / (2 * h)
        scale = max(np.abs(fd).max(), 1e-6)
        assert np.abs(got[name] - fd).max() <= tol * max(1.0, scale), name


def test_speed_objective_vjp():
    _check_objective_fd(SpeedObjective([0.6, 0.8]), _random_state(10))


def test_turning_objective_vjp():
    _check_objective_fd(TurningObjective(1.0), _random_state(11), tol=1e-5)


def test_waypoint_objective_vjp():
    path = quintic_fit([0.1, 0.2], [0.3, 0], [0, 0], [0.9, 0.5], [0, 0],
                       [0, 0], 1.0)
    _check_objective_fd(WaypointObjective(path, dt=1e-3), _random_state(12),
                        fields=("x", "mass"), t=3)


def test_final_shape_emd_objective_vjp():
    rng = np.random.default_rng(13)
    ps = _random_state(13)
    target = ps.x + 0.02 * rng.standard_normal(ps.x.shape)
    _check_objective_fd(FinalShapeEMD(target), ps, fields=("x",))


def test_objective_stride():
    obj = SpeedObjective([1.0, 0.0], stride=4)
    ps = with_v(block(), [1.0, 0.0])
    assert obj.step_term(ps, 0) == pytest.approx(-1.0)
    assert obj.step_term(ps, 1) == 0.0
    assert obj.step_term(ps, 4) == pytest.approx(-1.0)


def test_task_specs_and_payloads():
    s = SpeedTask(direction=[1.0, 0.0])
    np.testing.assert_array_equal(s.payload_vec(), [1.0, 0.0])
    with pytest.raises(ConfigError):
        SpeedTask(direction=[1.0, 1.0])
    t = TurningTask()
    assert t.payload_vec().shape == (1,)
    path = quintic_fit([0, 0], [1, 0], [0, 0], [2, 0], [1, 0], [0, 0], 2.0)
    w = WaypointTask(path)
    np.testing.assert_allclose(w.payload(0.5)["x_target"], [0.5, 0.0],
                               atol=1e-12)
    ps = with_v(block(), [1.0, 0.0])
    assert s.reward(ps) == pytest.approx(1.0)


def test_reward_log_csv(tmp_path):
    f = tmp_path / "log.csv"
    write_reward_log(f, [0.5, -0.2, 0.1])
    rows = f.read_text().strip().splitlines()
    assert rows[0] == "step,reward,cumulative"
    assert rows[2].startswith("1,-0.2,")
    assert float(rows[3].split(",")[2]) == pytest.approx(0.4)
