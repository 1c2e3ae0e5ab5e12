"""Whole-rollout reverse-mode differentiation with segment recomputation.

The recording forward pass stores a full state snapshot every N substeps
plus the per-control-step actions (and observations, for closed-loop
controllers). The backward pass walks segments last to first, replaying
each segment forward once with caches and then running backward_substep
in strict reverse order. Replay is bit-identical to the recording pass in
deterministic mode, so gradients do not depend on N.

Memory accounting counts logical snapshot units: one per live checkpoint
and one per live substep cache. The peak is max ceil(T/N) + N + O(1)
units, against T + O(1) for a full tape.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..sim.step import Simulator
from ..state import ParticleSystem
from .adjoint import AdjointState, backward_substep


class Objective:
    """Scalar rollout loss: sum of per-substep terms plus a final term.

    step_term(ps, t) is evaluated on the post-substep state of substep t;
    step_vjp must add the matching state cotangent into adj. Subclasses
    override whichever pair they use.
    """

    def step_term(self, ps: ParticleSystem, t: int) -> float:
        return 0.0

    def step_vjp(self, ps: ParticleSystem, t: int, adj: AdjointState) -> None:
        pass

    def final_term(self, ps: ParticleSystem) -> float:
        return 0.0

    def final_vjp(self, ps: ParticleSystem, adj: AdjointState) -> None:
        pass


class MemoryMeter:
    """High-water mark of live snapshot units (checkpoints + caches)."""

    def __init__(self):
        self.live = 0
        self.peak = 0

    def alloc(self, n: int = 1):
        self.live += n
        self.peak = max(self.peak, self.live)

    def free(self, n: int = 1):
        self.live -= n


@dataclass
class RolloutResult:
    loss: float
    ps_final: ParticleSystem
    us: np.ndarray                    # (n_control_steps, K) actions taken
    step_losses: np.ndarray           # (T,) per-substep loss terms
    grads: dict | None = None         # parameter-group name -> array
    adj: AdjointState | None = None
    peak_units: int | None = None
    n_substeps_run: int = 0           # forward substeps incl. replays


class Rollout:
    """Couples a Simulator, a controller, and an Objective."""

    def __init__(self, sim: Simulator, controller, objective: Objective,
                 obs_fn=None, obs_vjp=None, substeps_per_control=None):
        self.sim = sim
        self.controller = controller
        self.objective = objective
        self.obs_fn = obs_fn
        self.obs_vjp = obs_vjp
        self.spc = substeps_per_control or sim.cfg.substeps_per_control
        if controller is not None and controller.needs_obs and obs_fn is None:
            raise ValueError("closed-loop controller needs an obs_fn")

    def _record(self, ps0: ParticleSystem, T: int, N: int, meter: MemoryMeter):
        """Forward pass storing checkpoints, actions, and observations."""
        dt = self.sim.cfg.dt
        ckpts = {0: ps0}
        meter.alloc()
        us, obs_list = [], []
        step_losses = np.zeros(T)
        ps = ps0
        u = None
        loss = 0.0
        for t in range(T):
            if self.controller is not None and t % self.spc == 0:
                obs = self.obs_fn(ps) if self.controller.needs_obs else None
                u = self.controller(t // self.spc, t * dt, obs)
                us.append(u)
                obs_list.append(obs)
            ps, _ = self.sim.substep(ps, u, substep_index=t)
            term = self.objective.step_term(ps, t)
            step_losses[t] = term
            loss += term
            if (t + 1) % N == 0 and t + 1 < T:
                ckpts[t + 1] = ps
                meter.alloc()
        loss += self.objective.final_term(ps)
        us_arr = np.asarray(us) if us else np.zeros((0, 0))
        return loss, ps, ckpts, us_arr, obs_list, step_losses

    def forward(self, ps0: ParticleSystem, T: int) -> RolloutResult:
        meter = MemoryMeter()
        loss, ps, _, us, _, step_losses = self._record(ps0, T, N=max(T, 1),
                                                       meter=meter)
        return RolloutResult(loss=loss, ps_final=ps, us=us,
                             step_losses=step_losses, n_substeps_run=T)

    def grad(self, ps0: ParticleSystem, T: int, N: int = 16,
             seed_adj: AdjointState | None = None) -> RolloutResult:
        """Loss and gradients via checkpointed adjoint walk.

        Controller grads are zeroed first and accumulated in place; the
        particle-state and design cotangents come back in result.adj.
        """
        if not (1 <= N <= max(T, 1)):
            raise ValueError(f"checkpoint interval {N} outside [1, {T}]")
        dt = self.sim.cfg.dt
        meter = MemoryMeter()
        loss, ps_final, ckpts, us, obs_list, step_losses = \
            self._record(ps0, T, N, meter)
        substeps_run = T

        if self.controller is not None:
            self.controller.zero_grad()
        adj = seed_adj if seed_adj is not None else AdjointState.zeros(ps_final)
        self.objective.final_vjp(ps_final, adj)
        meter.alloc()  # the final state is held throughout

        n_act = us.shape[1] if us.size else 0
        gu_acc = np.zeros(n_act)
        seg_starts = list(range(0, T, N))
        for seg_start in reversed(seg_starts):
            seg_end = min(seg_start + N, T)
            ps = ckpts[seg_start]
            caches = []
            for t in range(seg_start, seg_end):
                u = us[t // self.spc] if n_act else None
                ps, cache = self.sim.substep(ps, u, substep_index=t,
                                             want_cache=True)
                caches.append(cache)
                meter.alloc()
            substeps_run += seg_end - seg_start
            for t in range(seg_end - 1, seg_start - 1, -1):
                cache = caches[t - seg_start]
                self.objective.step_vjp(cache.ps_out, t, adj)
                gu = backward_substep(cache, adj, self.sim.spec,
                                      self.sim.materials, self.sim.bc,
                                      self.sim.cfg)
                if gu is not None:
                    gu_acc += gu
                if self.controller is not None and t % self.spc == 0:
                    step = t // self.spc
                    gobs = self.controller.backward(step, t * dt, gu_acc,
                                                    obs_list[step])
                    if gobs is not None and self.obs_vjp is not None:
                        self.obs_vjp(cache.ps_in, gobs, adj)
                    gu_acc[:] = 0.0
                caches[t - seg_start] = None
                meter.free()
            ckpts.pop(seg_start)
            meter.free()

        grads = {"x0": adj.gx, "v0": adj.gv, "F0": adj.gF, "C0": adj.gC,
                 "stiffness": adj.gs, "mass": adj.gm, "volume": adj.gvol,
                 "muscle": adj.gmuscle}
        if self.controller is not None:
            grads["control"] = self.controller.grad
        return RolloutResult(loss=loss, ps_final=ps_final, us=us,
                             step_losses=step_losses, grads=grads, adj=adj,
                             peak_units=meter.peak,
                             n_substeps_run=substeps_run)


def dump_gradients(grads: dict) -> str:
    """JSON map from parameter-group name to flat array."""
    return json.dumps({k: np.asarray(v).ravel().tolist()
                       for k, v in grads.items()}, indent=1)
