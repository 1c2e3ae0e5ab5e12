"""Co-design orchestration: decode, rollout, adjoint, joint Adam steps.

A CodesignProblem bundles everything a run needs: the base lattice and
decoder, the biome/grid/sim configuration, an objective, and a controller
factory. run_codesign optimizes the active parameter groups for the chosen
mode; design and control share one learning rate, and since Adam is
coordinate-wise, per-group states update jointly exactly as a single state
over the concatenated vector would.

Iteration i logs the reward of the rollout that produced iteration i's
gradient (the evaluation at the current parameters, before the step), so a
budget of b yields exactly b logged iterations; budget 0 logs the single
initial evaluation. The reported reward is the episode mean per substep.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff.rollout import Rollout, RolloutResult
from ..biomes import BiomeSpec
from ..design.base import BaseParticles, DesignGrad, DesignSpec
from ..errors import AllRunsFailed, MorphosimError
from ..scene import Scene, assemble_scene
from ..sim.step import Simulator
from ..state import GridSpec, MaterialParams, SimConfig
from .. import snapshots
from .adam import AdamState, adam_step
from .cmaes import CmaEsState, cmaes_ask, cmaes_tell


@dataclass
class CodesignProblem:
    """One co-design task: representation, scene recipe, objective, control."""

    base: BaseParticles
    decoder: object                  # vector / with_vector / decode / decode_vjp
    biome: BiomeSpec
    spec: GridSpec
    cfg: SimConfig
    objective: object                # rollout Objective
    make_controller: object          # seed -> controller
    T: int                           # substeps per episode
    primitives: list | None = None   # basis decoders take them in decode()
    placement: np.ndarray | None = None
    robot_material: MaterialParams | None = None
    scene_seed: int = 0
    scene_kw: dict = field(default_factory=dict)
    prune_tau: float = 1e-3
    obs_fn: object = None
    obs_vjp: object = None

    def decode(self, p_design: np.ndarray) -> DesignSpec:
        dec = self.decoder.with_vector(np.asarray(p_design, dtype=float))
        if self.primitives is None:
            return dec.decode(self.base)
        return dec.decode(self.base, self.primitives)

    def decode_vjp(self, p_design: np.ndarray, dg: DesignGrad) -> np.ndarray:
        dec = self.decoder.with_vector(np.asarray(p_design, dtype=float))
        if self.primitives is None:
            return dec.decode_vjp(self.base, dg)
        return dec.decode_vjp(self.base, self.primitives, dg)

    def build(self, p_design: np.ndarray) -> Scene:
        design = self.decode(p_design).pruned(self.prune_tau)
        return assemble_scene(self.biome, design, self.spec,
                              seed=self.scene_seed, placement=self.placement,
                              robot_material=self.robot_material,
                              **self.scene_kw)

    def rollout(self, scene: Scene, controller) -> Rollout:
        sim = Simulator(scene.spec, scene.materials, self.cfg, scene.terrain)
        return Rollout(sim, controller, self.objective,
                       obs_fn=self.obs_fn, obs_vjp=self.obs_vjp)


def evaluate(problem: CodesignProblem, p_design, controller
             ) -> tuple[float, RolloutResult]:
    """Forward episode; returns (mean reward per substep, result)."""
    scene = problem.build(p_design)
    result = problem.rollout(scene, controller).forward(scene.ps, problem.T)
    return -result.loss / problem.T, result


def codesign_grad(problem: CodesignProblem, p_design, controller, N: int = 16
                  ) -> tuple[float, np.ndarray, RolloutResult]:
    """Episode loss, design-parameter gradient, and the rollout result.

    The controller's own gradient accumulates in controller.grad. Pruning
    and scene assembly are held fixed by the rollout; cotangents of pruned
    sites are zero (they contribute nothing locally).
    """
    scene = problem.build(p_design)
    result = problem.rollout(scene, controller).grad(scene.ps, problem.T,
                                                     N=min(N, max(problem.T, 1)))
    dg = DesignGrad.from_rollout(result.adj, scene.ps, problem.base.n)
    gdesign = problem.decode_vjp(p_design, dg)
    return result.loss, gdesign, result


@dataclass
class RunResult:
    log: list                         # (iter, reward, walltime) rows
    params_design: np.ndarray
    params_control: np.ndarray
    best_reward: float
    best_params: dict
    events: list
    episodes: int

    @property
    def final_reward(self) -> float:
        return self.log[-1][1]


MODES = ("control_only", "design_only", "codesign")


def run_codesign(problem: CodesignProblem, mode: str, budget: int,
                 lr: float = 0.01, seed: int = 0, N: int = 16,
                 out_dir=None, snapshot_every: int = 0,
                 config: dict | None = None) -> RunResult:
    """Gradient-based co-design for `budget` iterations.

    mode freezes the inactive group: control_only leaves the design at the
    decoder's initial vector, design_only keeps the seeded controller fixed.
    A non-finite gradient in any active group skips the step and records an
    event. Deterministic given (problem, mode, budget, lr, seed, N).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    controller = problem.make_controller(seed)
    p_design = np.asarray(problem.decoder.vector, dtype=float).copy()
    design_state = AdamState(p_design.copy(), lr=lr)
    control_state = AdamState(controller.params.copy(), lr=lr)

    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    log, events = [], []
    best_reward, best_params = -np.inf, None
    episodes = 0
    t0 = time.perf_counter()

    def note_best(reward):
        nonlocal best_reward, best_params
        if reward > best_reward:
            best_reward = reward
            best_params = {"design": p_design.copy(),
                           "control": controller.params.copy()}

    if budget <= 0:
        reward, _ = evaluate(problem, p_design, controller)
        episodes += 1
        log.append((0, reward, time.perf_counter() - t0))
        note_best(reward)
    for it in range(budget):
        loss, gdesign, result = codesign_grad(problem, p_design, controller,
                                              N=N)
        episodes += 1
        reward = -loss / problem.T
        log.append((it, reward, time.perf_counter() - t0))
        note_best(reward)
        if snapshot_every and out_dir and it % snapshot_every == 0:
            root = Path(out_dir)
            snapshots.write_design(root / f"design_{it:05d}.json",
                                   problem.decode(p_design))

        active = []
        if mode in ("design_only", "codesign"):
            active.append(gdesign)
        if mode in ("control_only", "codesign"):
            active.append(result.grads["control"])
        if not all(np.isfinite(g).all() for g in active):
            events.append((it, "non-finite gradient; step skipped"))
            continue
        if mode in ("design_only", "codesign"):
            design_state, p_design = adam_step(design_state, gdesign)
        if mode in ("control_only", "codesign"):
            control_state, p = adam_step(control_state,
                                         result.grads["control"])
            controller.params = p

    out = RunResult(log=log, params_design=p_design,
                    params_control=controller.params.copy(),
                    best_reward=best_reward, best_params=best_params,
                    events=events, episodes=episodes)
    if out_dir is not None:
        root = Path(out_dir)
        snapshots.write_config(root / "config.json", config if config
                               is not None else {"mode": mode,
                                                 "budget": budget, "lr": lr,
                                                 "seed": seed, "N": N})
        snapshots.write_log(root / "log.csv", log)
        snapshots.write_params(root / "params_best.json", best_params)
    return out


def run_cmaes_codesign(problem: CodesignProblem, budget: int, seed: int = 0,
                       sigma: float = 0.1, lam: int = 10,
                       out_dir=None, config: dict | None = None) -> RunResult:
    """Gradient-free baseline over the joint [design, control] vector.

    budget counts episodes (forward rollouts), making it comparable to
    run_codesign's iteration count one-to-one. Partial final generations
    are truncated to stay within budget.
    """
    controller = problem.make_controller(seed)
    p_design = np.asarray(problem.decoder.vector, dtype=float).copy()
    nd = p_design.size
    joint = np.concatenate([p_design, controller.params])
    state = CmaEsState.init(joint, sigma=sigma, lam=lam, seed=seed)

    def eval_joint(vec) -> float:
        controller.params = vec[nd:].copy()
        reward, _ = evaluate(problem, vec[:nd], controller)
        return reward

    log, events = [], []
    best_reward, best_vec = -np.inf, joint.copy()
    episodes = 0
    t0 = time.perf_counter()
    it = 0
    while episodes < budget:
        sample = cmaes_ask(state)
        take = min(lam, budget - episodes)
        fitness = np.zeros(lam)
        rewards = []
        for i in range(lam):
            if i < take:
                try:
                    r = eval_joint(sample[i])
                except MorphosimError as e:
                    events.append((it, f"sample failed: {e}"))
                    r = -np.inf
                episodes += 1
            else:
                r = -np.inf  # beyond budget: worst rank, no episode spent
            rewards.append(r)
            fitness[i] = -r if np.isfinite(r) else 1e30
        state = cmaes_tell(state, fitness)
        gen_best = int(np.argmax(rewards))
        if rewards[gen_best] > best_reward:
            best_reward = rewards[gen_best]
            best_vec = sample[gen_best].copy()
        log.append((it, float(max(rewards)), time.perf_counter() - t0))
        it += 1

    controller.params = best_vec[nd:].copy()
    best_params = {"design": best_vec[:nd].copy(),
                   "control": best_vec[nd:].copy()}
    out = RunResult(log=log, params_design=best_vec[:nd].copy(),
                    params_control=best_vec[nd:].copy(),
                    best_reward=best_reward, best_params=best_params,
                    events=events, episodes=episodes)
    if out_dir is not None:
        root = Path(out_dir)
        root.mkdir(parents=True, exist_ok=True)
        snapshots.write_config(root / "config.json", config if config
                               is not None else {"optimizer": "cmaes",
                                                 "budget": budget,
                                                 "sigma": sigma, "lam": lam,
                                                 "seed": seed})
        snapshots.write_log(root / "log.csv", log)
        snapshots.write_params(root / "params_best.json", best_params)
    return out


def multi_seed_best(run_one, n_seeds: int = 8, seeds=None):
    """Best result over seeded restarts.

    run_one(seed) -> an object with a final_reward attribute (RunResult) or
    a plain float. Seeds whose run raises a package error are recorded and
    skipped; if every run fails, raises AllRunsFailed. Returns
    (best_result, records) where records maps seed -> result or exception.
    """
    seeds = list(range(n_seeds)) if seeds is None else list(seeds)
    records = {}
    best, best_reward = None, -np.inf
    for seed in seeds:
        try:
            result = run_one(seed)
        except MorphosimError as e:
            records[seed] = e
            continue
        records[seed] = result
        reward = result if np.isscalar(result) else result.final_reward
        if reward > best_reward:
            best_reward, best = reward, result
    if best is None:
        raise AllRunsFailed(f"all {len(seeds)} seeded runs failed")
    return best, records
