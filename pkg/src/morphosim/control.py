"""Controllers mapping time (and optionally observations) to actions.

All controllers share one convention: __call__(step, t, obs) returns the
K-dim action u with every entry in [-bound, bound], and backward(step, t,
gu, obs) accumulates parameter cotangents into self.grad_* arrays,
returning the observation cotangent (or None for open-loop controllers).
Backward recomputes its own forward intermediates, so controllers are
stateless between calls and replay-safe.
"""
from __future__ import annotations

import json

import numpy as np

from .errors import ConfigError


def particle_actuation(u: np.ndarray, muscle: np.ndarray) -> np.ndarray:
    """Per-particle actuation a_p = sum_k u_k r_pk; linear in u."""
    return muscle @ u


class SineController:
    """Bounded sine-basis gait: u_k = c tanh(sum_ij a_ijk sin(w_i t + p_j) + b_ijk).

    Frequencies and phases are fixed by default; set learn_basis to expose
    them as parameters too.
    """

    needs_obs = False

    def __init__(self, n_actuators: int, omegas=(20.0, 80.0), n_phases: int = 4,
                 bound: float = 0.3, rng=None, init_scale: float = 0.0,
                 learn_basis: bool = False):
        self.n_actuators = n_actuators
        self.omegas = np.asarray(omegas, dtype=np.float64)
        self.phases = np.arange(n_phases) * (2.0 * np.pi / n_phases)
        self.bound = float(bound)
        self.learn_basis = learn_basis
        shape = (self.omegas.size, self.phases.size, n_actuators)
        if rng is not None and init_scale > 0.0:
            self.alpha = init_scale * rng.standard_normal(shape)
            self.beta = init_scale * rng.standard_normal(shape)
        else:
            self.alpha = np.zeros(shape)
            self.beta = np.zeros(shape)
        self.zero_grad()

    # --- parameter vector plumbing ---
    @property
    def n_params(self) -> int:
        base = 2 * self.alpha.size
        if self.learn_basis:
            base += self.omegas.size + self.phases.size
        return base

    @property
    def params(self) -> np.ndarray:
        parts = [self.alpha.ravel(), self.beta.ravel()]
        if self.learn_basis:
            parts += [self.omegas, self.phases]
        return np.concatenate(parts)

    @params.setter
    def params(self, p: np.ndarray):
        p = np.asarray(p, dtype=np.float64)
        n = self.alpha.size
        self.alpha = p[:n].reshape(self.alpha.shape)
        self.beta = p[n:2 * n].reshape(self.beta.shape)
        if self.learn_basis:
            k = self.omegas.size
            self.omegas = p[2 * n:2 * n + k].copy()
            self.phases = p[2 * n + k:].copy()

    @property
    def grad(self) -> np.ndarray:
        parts = [self.g_alpha.ravel(), self.g_beta.ravel()]
        if self.learn_basis:
            parts += [self.g_omegas, self.g_phases]
        return np.concatenate(parts)

    def zero_grad(self):
        self.g_alpha = np.zeros_like(self.alpha)
        self.g_beta = np.zeros_like(self.beta)
        self.g_omegas = np.zeros_like(self.omegas)
        self.g_phases = np.zeros_like(self.phases)

    # --- evaluation ---
    def _basis(self, t: float) -> np.ndarray:
        return np.sin(self.omegas[:, None] * t + self.phases[None, :])

    def __call__(self, step: int, t: float, obs=None) -> np.ndarray:
        s = self._basis(t)
        z = np.einsum("ij,ijk->k", s, self.alpha) + self.beta.sum(axis=(0, 1))
        return self.bound * np.tanh(z)

    def backward(self, step: int, t: float, gu: np.ndarray, obs=None):
        s = self._basis(t)
        z = np.einsum("ij,ijk->k", s, self.alpha) + self.beta.sum(axis=(0, 1))
        th = np.tanh(z)
        gz = gu * self.bound * (1.0 - th * th)   # (K,)
        self.g_alpha += s[:, :, None] * gz[None, None, :]
        self.g_beta += gz[None, None, :]
        if self.learn_basis:
            cos = np.cos(self.omegas[:, None] * t + self.phases[None, :])
            gs = np.einsum("ijk,k->ij", self.alpha, gz) * cos
            self.g_omegas += t * gs.sum(axis=1)
            self.g_phases += gs.sum(axis=0)
        return None

    # --- serialization; entries keyed "i,j,k" ---
    def to_json(self) -> str:
        def keyed(arr):
            I, J, K = arr.shape
            return {f"{i},{j},{k}": arr[i, j, k]
                    for i in range(I) for j in range(J) for k in range(K)}
        return json.dumps({
            "type": "sine", "n_actuators": self.n_actuators,
            "omegas": self.omegas.tolist(), "phases": self.phases.tolist(),
            "bound": self.bound, "alpha": keyed(self.alpha),
            "beta": keyed(self.beta)}, indent=1)

    @staticmethod
    def from_json(text: str) -> "SineController":
        d = json.loads(text)
        if d.get("type") != "sine":
            raise ConfigError(f"expected sine controller, got {d.get('type')!r}")
        c = SineController(d["n_actuators"], omegas=d["omegas"],
                           n_phases=len(d["phases"]), bound=d["bound"])
        c.phases = np.asarray(d["phases"], dtype=np.float64)
        for key, val in d["alpha"].items():
            i, j, k = map(int, key.split(","))
            c.alpha[i, j, k] = val
        for key, val in d["beta"].items():
            i, j, k = map(int, key.split(","))
            c.beta[i, j, k] = val
        return c


class OpenLoopTable:
    """Per-control-step action table, tanh-squashed so actions stay bounded.

    Parameters are the pre-squash values; u_t = bound * tanh(raw_t). Steps
    beyond the table hold the last entry.
    """

    needs_obs = False

    def __init__(self, n_steps: int, n_actuators: int, bound: float = 0.3,
                 raw: np.ndarray | None = None):
        self.n_steps = n_steps
        self.n_actuators = n_actuators
        self.bound = float(bound)
        self.raw = np.zeros((n_steps, n_actuators)) if raw is None \
            else np.asarray(raw, dtype=np.float64).reshape(n_steps, n_actuators)
        self.zero_grad()

    @property
    def n_params(self) -> int:
        return self.raw.size

    @property
    def params(self) -> np.ndarray:
        return self.raw.ravel().copy()

    @params.setter
    def params(self, p):
        self.raw = np.asarray(p, dtype=np.float64).reshape(self.raw.shape)

    @property
    def grad(self) -> np.ndarray:
        return self.g_raw.ravel().copy()

    def zero_grad(self):
        self.g_raw = np.zeros_like(self.raw)

    def __call__(self, step: int, t: float, obs=None) -> np.ndarray:
        i = min(step, self.n_steps - 1)
        return self.bound * np.tanh(self.raw[i])

    def backward(self, step: int, t: float, gu: np.ndarray, obs=None):
        i = min(step, self.n_steps - 1)
        th = np.tanh(self.raw[i])
        self.g_raw[i] += gu * self.bound * (1.0 - th * th)
        return None

    def to_json(self) -> str:
        return json.dumps({"type": "open_loop", "n_steps": self.n_steps,
                           "n_actuators": self.n_actuators, "bound": self.bound,
                           "raw": self.raw.tolist()}, indent=1)

    @staticmethod
    def from_json(text: str) -> "OpenLoopTable":
        d = json.loads(text)
        if d.get("type") != "open_loop":
            raise ConfigError(f"expected open_loop controller, got {d.get('type')!r}")
        return OpenLoopTable(d["n_steps"], d["n_actuators"], bound=d["bound"],
                             raw=np.asarray(d["raw"]))


class MLPController:
    """Closed-loop controller: obs -> tanh MLP -> bounded action.

    Two tanh hidden layers of the same width; output squashed like the
    other controllers. backward recomputes activations from obs, so it
    needs the same obs vector the forward call received.
    """

    needs_obs = True

    def __init__(self, obs_dim: int, n_actuators: int, hidden: int = 32,
                 bound: float = 0.3, seed: int = 0):
        self.obs_dim = obs_dim
        self.n_actuators = n_actuators
        self.hidden = hidden
        self.bound = float(bound)
        rng = np.random.default_rng(seed)
        def init(nin, nout):
            return rng.standard_normal((nout, nin)) / np.sqrt(nin)
        self.W = [init(obs_dim, hidden), init(hidden, hidden),
                  init(hidden, n_actuators)]
        self.b = [np.zeros(hidden), np.zeros(hidden), np.zeros(n_actuators)]
        self.zero_grad()

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.W) + sum(b.size for b in self.b)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.W]
                              + [b.ravel() for b in self.b])

    @params.setter
    def params(self, p):
        p = np.asarray(p, dtype=np.float64)
        k = 0
        for w in self.W:
            w[...] = p[k:k + w.size].reshape(w.shape)
            k += w.size
        for b in self.b:
            b[...] = p[k:k + b.size]
            k += b.size

    @property
    def grad(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.gW]
                              + [b.ravel() for b in self.gb])

    def zero_grad(self):
        self.gW = [np.zeros_like(w) for w in self.W]
        self.gb = [np.zeros_like(b) for b in self.b]

    def _forward(self, obs):
        h1 = np.tanh(self.W[0] @ obs + self.b[0])
        h2 = np.tanh(self.W[1] @ h1 + self.b[1])
        z = self.W[2] @ h2 + self.b[2]
        return h1, h2, z

    def __call__(self, step: int, t: float, obs=None) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        _, _, z = self._forward(obs)
        return self.bound * np.tanh(z)

    def backward(self, step: int, t: float, gu: np.ndarray, obs=None):
        obs = np.asarray(obs, dtype=np.float64)
        h1, h2, z = self._forward(obs)
        gz = gu * self.bound * (1.0 - np.tanh(z) ** 2)
        self.gW[2] += np.outer(gz, h2)
        self.gb[2] += gz
        gh2 = (self.W[2].T @ gz) * (1.0 - h2 * h2)
        self.gW[1] += np.outer(gh2, h1)
        self.gb[1] += gh2
        gh1 = (self.W[1].T @ gh2) * (1.0 - h1 * h1)
        self.gW[0] += np.outer(gh1, obs)
        self.gb[0] += gh1
        return self.W[0].T @ gh1

    def to_json(self) -> str:
        return json.dumps({
            "type": "mlp", "obs_dim": self.obs_dim,
            "n_actuators": self.n_actuators, "hidden": self.hidden,
            "bound": self.bound, "W": [w.tolist() for w in self.W],
            "b": [b.tolist() for b in self.b]}, indent=1)

    @staticmethod
    def from_json(text: str) -> "MLPController":
        d = json.loads(text)
        if d.get("type") != "mlp":
            raise ConfigError(f"expected mlp controller, got {d.get('type')!r}")
        c = MLPController(d["obs_dim"], d["n_actuators"], hidden=d["hidden"],
                          bound=d["bound"])
        c.W = [np.asarray(w, dtype=np.float64) for w in d["W"]]
        c.b = [np.asarray(b, dtype=np.float64) for b in d["b"]]
        return c


def controller_from_json(text: str):
    kind = json.loads(text).get("type")
    table = {"sine": SineController, "open_loop": OpenLoopTable,
             "mlp": MLPController}
    if kind not in table:
        raise ConfigError(f"unknown controller type {kind!r}")
    return table[kind].from_json(text)
