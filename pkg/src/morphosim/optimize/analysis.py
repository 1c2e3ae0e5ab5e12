"""Loss-landscape sweeps and actuation-ambiguity experiments.

sweep_1d walks one scalar through a grid and records the loss at each
value; count_interior_minima then counts strict dips, the cheap summary of
how multi-modal the sampled axis is. ambiguity_experiment quantifies how
interchangeable actuation parameters are: a reference rollout is recorded,
the robot is perturbed (muscle stiffness scaled, or muscles regrouped into
K clusters), and an open-loop controller is refit to match the reference's
final frame under an earth-mover distance.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..autodiff.rollout import Objective, Rollout
from ..biomes import BiomeSpec
from ..control import OpenLoopTable
from ..design.annotate import annotate_muscles
from ..design.base import DesignSpec
from ..errors import ConfigError
from ..scene import assemble_scene
from ..sim.step import Simulator
from ..state import GridSpec, SimConfig
from ..tasks import FinalShapeEMD
from .adam import AdamState, adam_step
from .runner import CodesignProblem, evaluate


def sweep_1d(loss_fn, grid) -> np.ndarray:
    """Loss at each grid value; loss_fn maps one scalar to a float."""
    grid = np.asarray(grid, dtype=float)
    return np.array([float(loss_fn(v)) for v in grid])


def count_interior_minima(losses, atol: float = 0.0) -> int:
    """Strict interior minima of a sampled curve (endpoints excluded)."""
    l = np.asarray(losses, dtype=float)
    if l.size < 3:
        return 0
    mid, left, right = l[1:-1], l[:-2], l[2:]
    return int(np.sum((mid < left - atol) & (mid < right - atol)))


def design_axis(problem: CodesignProblem, controller, index: int,
                p_design=None):
    """Closure sweeping one coordinate of the design vector.

    Returns loss_fn(value) = episode loss with p_design[index] = value and
    the controller held fixed, ready for sweep_1d.
    """
    base = (np.asarray(problem.decoder.vector, dtype=float).copy()
            if p_design is None else np.asarray(p_design, dtype=float).copy())

    def loss_fn(value):
        p = base.copy()
        p[index] = value
        reward, _ = evaluate(problem, p, controller)
        return -reward * problem.T
    return loss_fn


@dataclass
class AmbiguityConfig:
    """Scene recipe plus fitting budget for ambiguity_experiment."""

    design: DesignSpec
    biome: BiomeSpec
    spec: GridSpec
    cfg: SimConfig
    frames: int = 10                 # control steps per episode
    multipliers: tuple = (1.0, 2.0, 4.0)
    ks: tuple = (1, 2, 4, 8)
    n_seeds: int = 5
    fit_iters: int = 25
    lr: float = 0.05
    bound: float = 0.3
    emd_method: str = "auto"
    N: int = 8                       # checkpoint segments during fits
    seed: int = 0
    scene_seed: int = 0
    placement: np.ndarray | None = None
    scene_kw: dict = field(default_factory=dict)

    @property
    def substeps(self) -> int:
        return self.frames * self.cfg.substeps_per_control


def _episode(config: AmbiguityConfig, design: DesignSpec, controller,
             objective):
    scene = assemble_scene(config.biome, design, config.spec,
                           seed=config.scene_seed, placement=config.placement,
                           **config.scene_kw)
    sim = Simulator(config.spec, scene.materials, config.cfg, scene.terrain)
    return Rollout(sim, controller, objective), scene.ps


def _reference_frame(config: AmbiguityConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    """Roll the unperturbed robot under a random bounded table controller;
    returns (final robot positions, reference raw table)."""
    n_act = config.design.n_actuators
    raw = rng.uniform(-1.5, 1.5, size=(config.frames, n_act))
    ctrl = OpenLoopTable(config.frames, n_act, bound=config.bound, raw=raw)

    class _Record(Objective):
        def final_term(self, ps):
            self.x = ps.x[ps.robot].copy()
            return 0.0

    rec = _Record()
    roll, ps0 = _episode(config, config.design, ctrl, rec)
    roll.forward(ps0, config.substeps)
    return rec.x, raw


def _fit_matching_error(config: AmbiguityConfig, design: DesignSpec,
                        target: np.ndarray, n_act: int,
                        warm: np.ndarray | None = None) -> float:
    """Best earth-mover matching error reached while fitting an open-loop
    table to reproduce the target final frame."""
    ctrl = OpenLoopTable(config.frames, n_act, bound=config.bound,
                         raw=warm.copy() if warm is not None else None)
    roll, ps0 = _episode(config, design, ctrl,
                         FinalShapeEMD(target, method=config.emd_method))
    state = AdamState(ctrl.params.copy(), lr=config.lr)
    best = np.inf
    N = min(config.N, max(config.substeps, 1))
    for _ in range(config.fit_iters):
        result = roll.grad(ps0, config.substeps, N=N)
        best = min(best, result.loss)
        g = result.grads["control"]
        if not np.isfinite(g).all():
            break
        state, p = adam_step(state, g)
        ctrl.params = p
    best = min(best, roll.forward(ps0, config.substeps).loss)
    return float(best)


def ambiguity_experiment(kind: str, config: AmbiguityConfig) -> dict:
    """Matching error after refitting a controller on a perturbed robot.

    kind="stiffness": every muscle's stiffness is scaled by each multiplier
    and the fit warm-starts from the reference table, so the identity
    multiplier sits at the optimization floor while stronger muscles leave
    a residual the budget cannot close.
    kind="placement": muscles are regrouped into K clusters (fresh fibers,
    cold-started table with K channels); more groups can imitate more of
    the reference motion.

    Returns {level: errors}, one error per seed (shape (n_seeds,)).
    """
    if kind == "stiffness":
        levels = tuple(config.multipliers)
    elif kind == "placement":
        levels = tuple(config.ks)
    else:
        raise ConfigError(f"kind must be 'stiffness' or 'placement', got {kind!r}")

    table = {level: np.zeros(config.n_seeds) for level in levels}
    for trial in range(config.n_seeds):
        rng = np.random.default_rng((config.seed, trial))
        target, ref_raw = _reference_frame(config, rng)
        for level in levels:
            if kind == "stiffness":
                m = float(level)
                design = replace(config.design, s=config.design.s * m,
                                 s0=config.design.s0 * max(1.0, m))
                err = _fit_matching_error(config, design, target,
                                          config.design.n_actuators,
                                          warm=ref_raw)
            else:
                k = int(level)
                r, f = annotate_muscles(config.design.x, k,
                                        seed=config.seed * 1000 + trial)
                design = replace(config.design, r=r, f=f)
                err = _fit_matching_error(config, design, target, k)
            table[level][trial] = err
    return table
