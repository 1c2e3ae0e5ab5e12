"""CMA-ES with rank-1 and rank-mu covariance updates (minimization).

ask draws a population from N(mean, sigma^2 C); tell consumes the fitness
values of exactly that population and performs the standard evolution-path
updates. An eigenvalue floor keeps C positive definite. All-equal fitness
carries no ranking information, so tell leaves the distribution unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, SizeMismatch


@dataclass
class CmaEsState:
    mean: np.ndarray
    sigma: float = 0.1
    lam: int = 10
    C: np.ndarray = None
    p_sigma: np.ndarray = None
    p_c: np.ndarray = None
    gen: int = 0
    rng: np.random.Generator = None
    asked_y: np.ndarray = None   # N(0, C) draws behind the pending ask

    @classmethod
    def init(cls, mean, sigma: float = 0.1, lam: int = 10,
             seed: int = 0) -> "CmaEsState":
        mean = np.asarray(mean, dtype=float)
        if lam < 2:
            raise ConfigError(f"population size must be >= 2, got {lam}")
        n = mean.size
        return cls(mean=mean.copy(), sigma=sigma, lam=lam, C=np.eye(n),
                   p_sigma=np.zeros(n), p_c=np.zeros(n),
                   rng=np.random.default_rng(seed))

    @property
    def n(self) -> int:
        return self.mean.size


def _eig_floor(C: np.ndarray):
    evals, B = np.linalg.eigh(C)
    floor = 1e-20 * max(float(evals.max()), 1e-20)
    return np.maximum(evals, floor), B


def cmaes_ask(state: CmaEsState) -> np.ndarray:
    """Sample a (lam, n) population; the next tell consumes these draws."""
    evals, B = _eig_floor(state.C)
    z = state.rng.standard_normal((state.lam, state.n))
    y = z @ (B * np.sqrt(evals)).T
    state.asked_y = y
    return state.mean + state.sigma * y


def cmaes_tell(state: CmaEsState, fitness) -> CmaEsState:
    """Rank-based mean/step-size/covariance update from the asked samples."""
    if state.asked_y is None:
        raise ConfigError("tell called without a pending ask")
    fit = np.asarray(fitness, dtype=float)
    if fit.shape != (state.lam,):
        raise SizeMismatch(f"expected {state.lam} fitness values, "
                           f"got {fit.shape}")
    ys = state.asked_y
    state.asked_y = None
    state.gen += 1
    if np.ptp(fit) == 0.0:
        return state

    n, lam = state.n, state.lam
    mu = lam // 2
    w = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mu_eff = 1.0 / float(w @ w)
    cs = (mu_eff + 2.0) / (n + mu_eff + 5.0)
    ds = 1.0 + 2.0 * max(0.0, np.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + cs
    cc = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
    c1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
    cmu = min(1.0 - c1,
              2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
    chi_n = np.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))

    elite = ys[np.argsort(fit, kind="stable")[:mu]]
    y_w = w @ elite
    state.mean = state.mean + state.sigma * y_w

    evals, B = _eig_floor(state.C)
    inv_sqrt = (B / np.sqrt(evals)) @ B.T
    state.p_sigma = ((1.0 - cs) * state.p_sigma
                     + np.sqrt(cs * (2.0 - cs) * mu_eff) * (inv_sqrt @ y_w))
    norm_ps = float(np.linalg.norm(state.p_sigma))
    hsig = (norm_ps / np.sqrt(1.0 - (1.0 - cs) ** (2 * state.gen))
            < (1.4 + 2.0 / (n + 1.0)) * chi_n)
    state.p_c = ((1.0 - cc) * state.p_c
                 + (np.sqrt(cc * (2.0 - cc) * mu_eff) * y_w if hsig else 0.0))

    rank1 = np.outer(state.p_c, state.p_c)
    if not hsig:
        rank1 = rank1 + cc * (2.0 - cc) * state.C  # variance-loss correction
    rank_mu = np.einsum("i,ij,ik->jk", w, elite, elite)
    C = (1.0 - c1 - cmu) * state.C + c1 * rank1 + cmu * rank_mu
    C = 0.5 * (C + C.T)
    evals2, B2 = _eig_floor(C)
    state.C = 0.5 * ((B2 * evals2) @ B2.T + ((B2 * evals2) @ B2.T).T)
    state.sigma = state.sigma * float(np.exp((cs / ds) * (norm_ps / chi_n - 1.0)))
    assert np.isfinite(state.mean).all() and np.isfinite(state.sigma)
    assert np.isfinite(state.C).all()
    return state


# the combined operation: hand back fitness for the pending population
cmaes_ask_tell = cmaes_tell
