"""Primitive-basis design decoders: steep-sigmoid SDF interpolation and
weighted rotation averaging for fiber directions.

A DesignPrimitive stores per-base-particle fields: signed distance (negative
inside), stiffness, muscle membership rows, and fiber orientation as Euler
angles (intrinsic XYZ in 3D, a single angle in 2D). Primitives are exchanged
as columnar JSON.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import (ConfigError, DegenerateMean, DegenerateWeights,
                      ShapeMismatch, SizeMismatch)
from .base import BaseParticles, DesignGrad, DesignSpec
from .decoders import canonical_heading, sigmoid

SDF_TEMPERATURE = -1000.0


@dataclass
class DesignPrimitive:
    """Per-base-particle design fields for one primitive shape."""

    sdf: np.ndarray       # (n,), negative inside the shape
    s: np.ndarray         # (n,), stiffness in [0, s0]
    r: np.ndarray         # (n, K), membership rows on the simplex
    f_euler: np.ndarray   # (n, 1) angle in 2D, (n, 3) intrinsic XYZ in 3D

    def __post_init__(self):
        n = self.sdf.shape[0]
        if self.s.shape != (n,) or self.r.shape[0] != n \
                or self.f_euler.shape[0] != n:
            raise ShapeMismatch("primitive fields disagree on particle count")
        if not (self.sdf < 0).any():
            raise ConfigError("primitive has empty interior (no sdf < 0)")

    @property
    def n(self) -> int:
        return self.sdf.shape[0]

    def to_json(self) -> str:
        return json.dumps({
            "sdf": self.sdf.tolist(), "s": self.s.tolist(),
            "r": self.r.tolist(), "f_euler": self.f_euler.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "DesignPrimitive":
        d = json.loads(text)
        return cls(sdf=np.asarray(d["sdf"], dtype=float),
                   s=np.asarray(d["s"], dtype=float),
                   r=np.asarray(d["r"], dtype=float),
                   f_euler=np.asarray(d["f_euler"], dtype=float))


def euler_to_matrix(angles: np.ndarray) -> np.ndarray:
    """Batched Euler-to-rotation. (n, 1) planar angles or (n, 3) intrinsic
    XYZ."""
    angles = np.atleast_2d(angles)
    n, k = angles.shape
    if k == 1:
        c, s = np.cos(angles[:, 0]), np.sin(angles[:, 0])
        R = np.empty((n, 2, 2))
        R[:, 0, 0] = c
        R[:, 0, 1] = -s
        R[:, 1, 0] = s
        R[:, 1, 1] = c
        return R
    if k == 3:
        from scipy.spatial.transform import Rotation
        return Rotation.from_euler("XYZ", angles).as_matrix()
    raise ShapeMismatch(f"euler angles must have 1 or 3 columns, got {k}")


def special_procrustes(M: np.ndarray) -> np.ndarray:
    """Nearest rotation (Frobenius) to each matrix of a batch: from the SVD
    M = U S V^T, return U diag(1, .., det(UV^T)) V^T."""
    M = np.asarray(M, dtype=float)
    batched = M.ndim == 3
    M3 = M if batched else M[None]
    U, S, Vt = np.linalg.svd(M3)
    if np.any(S[:, -1] < 1e-12 * np.maximum(S[:, 0], 1e-30)):
        raise DegenerateMean("weighted mean of rotations is rank-deficient")
    det = np.linalg.det(U @ Vt)
    Ud = U.copy()
    Ud[:, :, -1] *= det[:, None]
    R = Ud @ Vt
    return R if batched else R[0]


def rotation_average(rotations, weights) -> np.ndarray:
    """Weighted chordal-mean rotation: project the weighted sum back to the
    rotation group."""
    Rs = np.asarray(rotations, dtype=float)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    return special_procrustes(np.einsum("i,idc->dc", w, Rs))


def _normalized(weights: np.ndarray, name: str) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if abs(total) < 1e-12:
        raise DegenerateWeights(f"{name} coefficients sum to zero")
    return w / total


def blend_stiffness_membership(beta, gamma, primitives, s0):
    """Shared s/r interpolation for the primitive-basis decoders: normalized
    linear blend, stiffness clipped to [0, s0], membership rows clamped
    nonnegative and renormalized to the simplex. A row whose blend clips to
    all zeros falls back to uniform membership."""
    b = _normalized(beta, "beta")
    g = _normalized(gamma, "gamma")
    s = np.stack([p.s for p in primitives])
    r = np.stack([p.r for p in primitives])
    s_mix = np.clip(b @ s, 0.0, s0)
    r_mix = np.clip(np.einsum("i,ipk->pk", g, r), 0.0, None)
    tot = r_mix.sum(axis=1, keepdims=True)
    k = r_mix.shape[1]
    r_mix = np.where(tot > 1e-12, r_mix / np.maximum(tot, 1e-12), 1.0 / k)
    return s_mix, r_mix


def blend_stiffness_membership_vjp(beta, gamma, primitives, s0, gs, gr):
    """Parameter cotangents (gbeta, ggamma) for blend_stiffness_membership."""
    b = _normalized(beta, "beta")
    g = _normalized(gamma, "gamma")
    s = np.stack([p.s for p in primitives])
    r = np.stack([p.r for p in primitives])

    raw_s = b @ s
    gs_eff = np.where((raw_s > 0) & (raw_s < s0), gs, 0.0)
    gbeta = _normalize_vjp(beta, s @ gs_eff)

    raw_r = np.einsum("i,ipk->pk", g, r)
    pos = np.clip(raw_r, 0.0, None)
    tot = np.maximum(pos.sum(axis=1, keepdims=True), 1e-12)
    gpos = (gr - (np.sum(gr * pos, axis=1, keepdims=True)) / tot) / tot
    live = pos.sum(axis=1, keepdims=True) > 1e-12  # uniform-fallback rows are flat
    graw = np.where((raw_r > 0) & live, gpos, 0.0)
    ggamma = _normalize_vjp(gamma, np.einsum("ipk,pk->i", r, graw))
    return gbeta, ggamma


@dataclass
class SDFLerp:
    """Interpolate a primitive basis: steep sigmoid of the blended signed
    distance for geometry, linear blends for stiffness and membership,
    rotation averaging for fiber direction."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    kappa: np.ndarray
    temperature: float = SDF_TEMPERATURE

    @classmethod
    def uniform(cls, n_primitives: int) -> "SDFLerp":
        w = np.full(n_primitives, 1.0 / n_primitives)
        return cls(w.copy(), w.copy(), w.copy(), w.copy())

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta, self.gamma, self.kappa])

    def with_vector(self, vec: np.ndarray) -> "SDFLerp":
        n = self.alpha.size
        if vec.size != 4 * n:
            raise SizeMismatch(f"expected {4 * n} params, got {vec.size}")
        return SDFLerp(vec[:n].copy(), vec[n:2 * n].copy(),
                       vec[2 * n:3 * n].copy(), vec[3 * n:].copy(),
                       self.temperature)

    def _stack(self, primitives):
        if len(primitives) != self.alpha.size:
            raise SizeMismatch(f"{self.alpha.size} coefficients for "
                               f"{len(primitives)} primitives")
        sdf = np.stack([p.sdf for p in primitives])      # (N, n)
        s = np.stack([p.s for p in primitives])          # (N, n)
        r = np.stack([p.r for p in primitives])          # (N, n, K)
        return sdf, s, r

    def decode(self, base: BaseParticles, primitives) -> DesignSpec:
        sdf, _, _ = self._stack(primitives)
        a = _normalized(self.alpha, "alpha")
        k = _normalized(self.kappa, "kappa")

        m = base.m0 * sigmoid(self.temperature * (a @ sdf))
        s_mix, r_mix = blend_stiffness_membership(
            self.beta, self.gamma, primitives, base.s0)

        Rs = np.stack([euler_to_matrix(p.f_euler) for p in primitives])
        mean = np.einsum("i,ipdc->pdc", k, Rs)
        R = special_procrustes(mean)
        f = R @ canonical_heading(base.dim)

        return DesignSpec(x=base.x.copy(), m=m, s=s_mix, r=r_mix, f=f,
                          volume=base.volume, m0=base.m0, s0=base.s0)

    def decode_vjp(self, base: BaseParticles, primitives,
                   dg: DesignGrad) -> np.ndarray:
        """Parameter cotangents for the (m, s, r) heads; kappa's fiber path is
        not differentiated (fiber is a fixed design output downstream)."""
        sdf, _, _ = self._stack(primitives)
        a = _normalized(self.alpha, "alpha")

        # m head
        blend = a @ sdf
        sig = sigmoid(self.temperature * blend)
        gblend = dg.gm * base.m0 * sig * (1 - sig) * self.temperature
        galpha = _normalize_vjp(self.alpha, sdf @ gblend)

        gbeta, ggamma = blend_stiffness_membership_vjp(
            self.beta, self.gamma, primitives, base.s0, dg.gs, dg.gr)

        return np.concatenate([galpha, gbeta, ggamma,
                               np.zeros_like(self.kappa)])


def _normalize_vjp(w: np.ndarray, g_hat: np.ndarray) -> np.ndarray:
    """Backward through w_hat = w / sum(w)."""
    total = w.sum()
    w_hat = w / total
    return (g_hat - w_hat @ g_hat) / total
