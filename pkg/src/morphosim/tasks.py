"""Locomotion rewards, quintic path generation, heading estimation, and the
point-set matching loss.

All rewards are pure functions of particle state and are mass-normalized, so
uniformly rescaling every particle mass leaves them unchanged. The Objective
subclasses at the bottom wire selected rewards into the differentiable rollout
(loss = negated reward, summed per substep).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .autodiff.rollout import Objective
from .errors import (CoincidentMarkers, ConfigError, EmptyRobot,
                     SingularSystem, SizeMismatch)
from .sim.materials import polar_rotation
from .state import ParticleSystem

_EXACT_MAX = 512  # largest set size routed to the optimal assignment


# ---------------------------------------------------------------------------
# quintic paths


@dataclass
class QuinticPath:
    """x(t) = c0 + c1 t + ... + c5 t^5 per axis; coefficients shape (6, d)."""

    c: np.ndarray
    T: float

    @property
    def dim(self) -> int:
        return self.c.shape[1]

    def position(self, t):
        tp = np.power.outer(np.asarray(t, dtype=float), np.arange(6))
        return tp @ self.c

    def velocity(self, t):
        k = np.arange(1, 6)
        tp = np.power.outer(np.asarray(t, dtype=float), k - 1) * k
        return tp @ self.c[1:]

    def acceleration(self, t):
        k = np.arange(2, 6)
        tp = np.power.outer(np.asarray(t, dtype=float), k - 2) * k * (k - 1)
        return tp @ self.c[2:]

    def waypoints(self, n: int) -> np.ndarray:
        """Sample n positions at evenly spaced times spanning [0, T]."""
        return self.position(np.linspace(0.0, self.T, n))


def quintic_fit(xs, vs, accs, xt, vt, at, T: float) -> QuinticPath:
    """Quintic with prescribed position/velocity/acceleration at both ends."""
    if T <= 0:
        raise ConfigError(f"path horizon must be positive, got {T}")
    xs, vs, accs, xt, vt, at = map(np.atleast_1d, (xs, vs, accs, xt, vt, at))
    k = np.arange(6, dtype=float)
    rows = [np.eye(6)[0], np.eye(6)[1], 2 * np.eye(6)[2]]
    tp = T ** k
    rows.append(tp)
    rows.append(np.where(k >= 1, k * T ** np.maximum(k - 1, 0), 0.0))
    rows.append(np.where(k >= 2, k * (k - 1) * T ** np.maximum(k - 2, 0), 0.0))
    M = np.stack(rows)
    B = np.stack([xs, vs, accs, xt, vt, at]).astype(float)
    try:
        c = np.linalg.solve(M, B)
    except np.linalg.LinAlgError as e:  # pragma: no cover - M is invertible for T>0
        raise SingularSystem(str(e)) from e
    return QuinticPath(c=c, T=float(T))


# ---------------------------------------------------------------------------
# rewards


def _robot_masses(ps: ParticleSystem):
    sel = ps.robot
    if not sel.any():
        raise EmptyRobot("reward requires at least one robot particle")
    m = ps.mass[sel]
    return sel, m, m.sum()


def reward_speed(ps: ParticleSystem, direction) -> float:
    """Mass-normalized mean velocity along a unit direction."""
    direction = np.asarray(direction, dtype=float)
    sel, m, M = _robot_masses(ps)
    return float(m @ (ps.v[sel] @ direction) / M)


def _tangents(x, centroid, up, dim):
    """Unit CCW tangent about `up` at each position; zero within 1e-9 of the
    rotation axis."""
    r = x - centroid
    if dim == 2:
        sign = float(np.sign(up)) if np.ndim(up) == 0 else 1.0
        c = np.stack([-r[:, 1], r[:, 0]], axis=1) * sign
    else:
        c = np.cross(np.broadcast_to(up, r.shape), r)
    norm = np.linalg.norm(c, axis=1)
    ok = norm >= 1e-9
    t = np.zeros_like(c)
    t[ok] = c[ok] / norm[ok, None]
    return t, c, norm, ok


def reward_turning(ps: ParticleSystem, up=1.0) -> float:
    """Mass-normalized tangential speed about the up axis through the robot
    centroid. Positive is counter-clockwise. In 2D pass up=+1 or -1."""
    sel, m, M = _robot_masses(ps)
    x = ps.x[sel]
    centroid = m @ x / M
    t, _, _, _ = _tangents(x, centroid, up, ps.dim)
    return float(m @ np.einsum("pd,pd->p", ps.v[sel], t) / M)


def estimate_heading(ps: ParticleSystem, head, tail) -> np.ndarray:
    """Unit vector from the mean tail-marker position to the mean head-marker
    position."""
    x_head = np.mean(np.atleast_2d(ps.x[head]), axis=0)
    x_tail = np.mean(np.atleast_2d(ps.x[tail]), axis=0)
    d = x_head - x_tail
    n = np.linalg.norm(d)
    if n < 1e-9:
        raise CoincidentMarkers("head and tail markers coincide")
    return d / n


def derotated_velocities(ps: ParticleSystem, sel=None) -> np.ndarray:
    """Per-particle velocities with local rigid rotation removed: R^T v with
    R from the polar factorization of F."""
    if sel is None:
        sel = slice(None)
    R = polar_rotation(ps.F[sel])
    return np.einsum("pij,pi->pj", R, ps.v[sel])


def reward_velocity_tracking(ps: ParticleSystem, path: QuinticPath, t: float,
                             head, tail, alpha_mag: float = 0.1,
                             alpha_dir: float = 0.9) -> float:
    """Weighted magnitude + direction match between the robot's mean
    body-frame velocity (projected on its heading) and the path velocity.

    The direction term is defined to be 0 when the projected mean velocity is
    below 1e-12.
    """
    v_target = path.velocity(t)
    d = estimate_heading(ps, head, tail)
    sel, m, M = _robot_masses(ps)
    v_body = derotated_velocities(ps, sel)
    s = float(m @ (v_body @ d) / M)   # signed speed along the heading
    v_proj = s * d
    speed = abs(s)
    r_mag = -(np.linalg.norm(v_target) - speed) ** 2
    r_dir = 0.0
    if speed > 1e-12:
        r_dir = float(v_target @ v_proj) / speed
    return alpha_mag * float(r_mag) + alpha_dir * r_dir


def reward_waypoint(ps: ParticleSystem, x_target) -> float:
    """Negated squared distance from the robot centroid to the target."""
    x_target = np.asarray(x_target, dtype=float)
    sel, m, M = _robot_masses(ps)
    centroid = m @ ps.x[sel] / M
    return -float(np.sum((x_target - centroid) ** 2))


def write_reward_log(path, rewards) -> None:
    """CSV log: step, reward, cumulative."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "reward", "cumulative"])
        total = 0.0
        for i, r in enumerate(rewards):
            total += float(r)
            w.writerow([i, float(r), total])


# ---------------------------------------------------------------------------
# point-set matching


def _pairwise_sq(A, B):
    return np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=2)


def _sinkhorn_plan(C, eps_target, budget=20000, tol=1e-9, omega=1.8):
    """Log-domain Sinkhorn with uniform marginals, epsilon annealing, and
    overrelaxation.

    Warm-up stages halve epsilon from max(C) down to the target; the final
    stage runs until the row-marginal L1 violation drops below tol or the
    iteration budget is spent. Returns (plan, eps, dual value); the dual is
    the entropic optimum, whose exact gradient emd_vjp implements.
    """
    n, m = C.shape
    log_a, log_b = -np.log(n), -np.log(m)
    f = np.zeros(n)
    g = np.zeros(m)
    eps = max(float(C.max()), eps_target)
    spent = 0
    while True:
        cap = 400 if eps > eps_target else max(budget - spent, 1)
        for it in range(cap):
            fn = eps * (log_a - logsumexp((g[None, :] - C) / eps, axis=1))
            f = f + omega * (fn - f)
            gn = eps * (log_b - logsumexp((f[:, None] - C) / eps, axis=0))
            g = g + omega * (gn - g)
            spent += 1
            if it % 20 == 19:
                rows = logsumexp((f[:, None] + g[None, :] - C) / eps, axis=1)
                if np.abs(np.exp(rows) - 1.0 / n).sum() < tol:
                    break
        if eps <= eps_target:
            break
        eps = max(eps * 0.5, eps_target)
    T = np.exp(np.minimum((f[:, None] + g[None, :] - C) / eps, 60.0))
    T /= T.sum()
    return T, eps, float(f.mean() + g.mean())


def emd_loss(A, B, method: str = "auto", eps=None, info: dict | None = None) -> float:
    """Mean squared ground cost of matching point set A onto point set B.

    Sets of at most 512 points are matched exactly (optimal assignment);
    larger sets use an entropic approximation whose epsilon is reported via
    the optional `info` dict. `method` forces "exact" or "sinkhorn".
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise SizeMismatch(f"point sets differ in shape: {A.shape} vs {B.shape}")
    n = A.shape[0]
    if method == "auto":
        method = "exact" if n <= _EXACT_MAX else "sinkhorn"
    C = _pairwise_sq(A, B)
    if method == "exact":
        rows, cols = linear_sum_assignment(C)
        value = float(C[rows, cols].mean())
        if info is not None:
            info.update(method="exact", assignment=cols)
    elif method == "sinkhorn":
        if eps is None:
            eps = 1e-3 * max(float(C.max()), 1e-30)
        plan, eps_used, dual = _sinkhorn_plan(C, eps)
        value = float(np.sum(plan * C))
        if info is not None:
            info.update(method="sinkhorn", eps=eps_used, plan=plan, dual=dual)
    else:
        raise ConfigError(f"unknown matching method {method!r}")
    return value


def emd_vjp(A, B, info: dict) -> np.ndarray:
    """Cotangent of emd_loss with respect to A, for the matching recorded in
    `info`.

    For the exact route the assignment is locally constant and the gradient is
    exact almost everywhere. For the entropic route the plan-weighted formula
    is the exact gradient of the dual optimum (info["dual"]) and approximates
    the gradient of the reported sharp cost to O(eps).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    if info["method"] == "exact":
        return 2.0 * (A - B[info["assignment"]]) / n
    plan = info["plan"]
    return 2.0 * (plan.sum(axis=1)[:, None] * A - plan @ B)


# ---------------------------------------------------------------------------
# task specifications


@dataclass
class SpeedTask:
    """Move as fast as possible along a fixed unit direction."""

    direction: np.ndarray

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(self.direction)
        if not np.isclose(n, 1.0, atol=1e-6):
            raise ConfigError("task direction must be unit-norm")

    def payload_vec(self) -> np.ndarray:
        return self.direction

    def reward(self, ps, t=0.0):
        return reward_speed(ps, self.direction)

    def objective(self, dt: float, stride: int = 1) -> "SpeedObjective":
        return SpeedObjective(self.direction, stride=stride)


@dataclass
class TurningTask:
    """Turn counter-clockwise about the up axis (scalar sign in 2D)."""

    up: float | np.ndarray = 1.0

    def __post_init__(self):
        if np.ndim(self.up) > 0:
            self.up = np.asarray(self.up, dtype=float)
            n = np.linalg.norm(self.up)
            if not np.isclose(n, 1.0, atol=1e-6):
                raise ConfigError("up axis must be unit-norm")

    def payload_vec(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.up, dtype=float))

    def reward(self, ps, t=0.0):
        return reward_turning(ps, self.up)

    def objective(self, dt: float, stride: int = 1) -> "TurningObjective":
        return TurningObjective(self.up, stride=stride)


@dataclass
class VelocityTrackingTask:
    """Match the path velocity in magnitude and direction (metric only)."""

    path: QuinticPath
    head: np.ndarray
    tail: np.ndarray
    alpha_mag: float = 0.1
    alpha_dir: float = 0.9

    def payload(self, t: float) -> dict:
        return {"v_target": self.path.velocity(t)}

    def payload_vec(self) -> np.ndarray:
        return np.zeros(self.path.dim)

    def reward(self, ps, t=0.0):
        return reward_velocity_tracking(ps, self.path, t, self.head,
                                        self.tail, self.alpha_mag,
                                        self.alpha_dir)


@dataclass
class WaypointTask:
    """Track path positions sampled at control steps."""

    path: QuinticPath

    def payload(self, t: float) -> dict:
        return {"x_target": self.path.position(t)}

    def payload_vec(self) -> np.ndarray:
        return np.zeros(self.path.dim)

    def reward(self, ps, t=0.0):
        return reward_waypoint(ps, self.path.position(t))

    def objective(self, dt: float, stride: int = 1) -> "WaypointObjective":
        return WaypointObjective(self.path, dt, stride=stride)


TaskSpec = Union[SpeedTask, TurningTask, VelocityTrackingTask, WaypointTask]


# ---------------------------------------------------------------------------
# rollout objectives (losses: negated rewards summed over substeps)


class _StridedObjective(Objective):
    def __init__(self, stride: int = 1):
        if stride < 1:
            raise ConfigError("stride must be >= 1")
        self.stride = stride

    def _active(self, t: int) -> bool:
        return t % self.stride == 0


class SpeedObjective(_StridedObjective):
    def __init__(self, direction, stride: int = 1):
        super().__init__(stride)
        self.direction = np.asarray(direction, dtype=float)

    def step_term(self, ps, t):
        if not self._active(t):
            return 0.0
        return -reward_speed(ps, self.direction)

    def step_vjp(self, ps, t, adj):
        if not self._active(t):
            return
        sel, m, M = _robot_masses(ps)
        r = reward_speed(ps, self.direction)
        adj.gv[sel] += -m[:, None] * self.direction[None, :] / M
        adj.gm[sel] += -((ps.v[sel] @ self.direction) - r) / M


class TurningObjective(_StridedObjective):
    def __init__(self, up=1.0, stride: int = 1):
        super().__init__(stride)
        self.up = up

    def step_term(self, ps, t):
        if not self._active(t):
            return 0.0
        return -reward_turning(ps, self.up)

    def step_vjp(self, ps, t, adj):
        if not self._active(t):
            return
        sel, m, M = _robot_masses(ps)
        x, v = ps.x[sel], ps.v[sel]
        centroid = m @ x / M
        t_hat, _, norm, ok = _tangents(x, centroid, self.up, ps.dim)
        w = m / M
        proj = np.einsum("pd,pd->p", v, t_hat)
        r = float(w @ proj)
        # reward cotangents (the loss negates them at the end)
        gv = w[:, None] * t_hat
        # through the unit tangent: dc for c = up x (x - centroid)
        gc = np.zeros_like(x)
        gt = w[:, None] * v
        gc[ok] = (gt[ok] - t_hat[ok] *
                  np.einsum("pd,pd->p", gt[ok], t_hat[ok])[:, None]) / norm[ok, None]
        if ps.dim == 2:
            sign = float(np.sign(self.up)) if np.ndim(self.up) == 0 else 1.0
            gr = np.stack([gc[:, 1], -gc[:, 0]], axis=1) * sign
        else:
            gr = np.cross(gc, np.broadcast_to(self.up, gc.shape))
        gx = gr.copy()
        gcent = -gr.sum(axis=0)
        gx += w[:, None] * gcent[None, :]
        gm = (proj - r) / M + ((x - centroid) @ gcent) / M
        adj.gv[sel] += -gv
        adj.gx[sel] += -gx
        adj.gm[sel] += -gm


class WaypointObjective(_StridedObjective):
    """Squared centroid-to-path distance accumulated along the rollout."""

    def __init__(self, path: QuinticPath, dt: float, stride: int = 1):
        super().__init__(stride)
        self.path = path
        self.dt = dt

    def step_term(self, ps, t):
        if not self._active(t):
            return 0.0
        return -reward_waypoint(ps, self.path.position((t + 1) * self.dt))

    def step_vjp(self, ps, t, adj):
        if not self._active(t):
            return
        sel, m, M = _robot_masses(ps)
        centroid = m @ ps.x[sel] / M
        gcent = 2.0 * (centroid - self.path.position((t + 1) * self.dt))
        adj.gx[sel] += m[:, None] * gcent[None, :] / M
        adj.gm[sel] += ((ps.x[sel] - centroid) @ gcent) / M


class FinalShapeEMD(Objective):
    """Match the final robot particle cloud to a recorded target cloud."""

    def __init__(self, target: np.ndarray, method: str = "auto"):
        self.target = np.asarray(target, dtype=float)
        self.method = method

    def final_term(self, ps):
        return emd_loss(ps.x[ps.robot], self.target, method=self.method)

    def final_vjp(self, ps, adj):
        info: dict = {}
        emd_loss(ps.x[ps.robot], self.target, method=self.method, info=info)
        adj.gx[ps.robot] += emd_vjp(ps.x[ps.robot], self.target, info)
