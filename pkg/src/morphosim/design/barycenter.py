"""Entropic Wasserstein barycenter of voxel occupancy histograms.

Geometry is interpolated as a debiased convolutional Sinkhorn barycenter:
primitives are rasterized to normalized histograms on the base voxel grid and
blended under the quadratic ground cost. The debiasing potential removes the
entropic smearing so a one-hot weight vector reproduces its input histogram
instead of a blurred copy. Stiffness, membership, and fiber heads reuse the
same code paths as the signed-distance decoder.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateWeights, NonConvergence, SizeMismatch
from .base import BaseParticles, DesignGrad, DesignSpec
from .decoders import bin_to_voxels, canonical_heading
from .primitives import (_normalize_vjp, _normalized,
                         blend_stiffness_membership,
                         blend_stiffness_membership_vjp, euler_to_matrix,
                         special_procrustes)

_FLOOR = 1e-300  # keeps logs and quotients finite far from the support
_D_SWEEPS = 3    # debiasing-potential relaxations per outer iteration


def gibbs_kernels(dims, eps_cells: float):
    """Per-axis 1D Gibbs kernels K[i, j] = exp(-(i - j)^2 / eps) for the
    squared ground cost measured in cell units."""
    kernels = []
    for g in dims:
        idx = np.arange(g, dtype=float)
        d2 = (idx[:, None] - idx[None, :]) ** 2
        kernels.append(np.exp(-d2 / eps_cells))
    return kernels


def _convolve(kernels, h: np.ndarray) -> np.ndarray:
    """Apply the separable kernel along every axis of h."""
    out = h
    for ax, K in enumerate(kernels):
        out = np.moveaxis(
            np.tensordot(K, np.moveaxis(out, ax, 0), axes=(1, 0)), 0, ax)
    return out


def rasterize_occupancy(x: np.ndarray, inside: np.ndarray, dims, lo, hi):
    """Histogram of inside-points per voxel, normalized to unit mass."""
    flat = bin_to_voxels(x[inside], dims, lo, hi)
    h = np.zeros(int(np.prod(dims)))
    np.add.at(h, flat, 1.0)
    total = h.sum()
    if total <= 0:
        raise DegenerateWeights("rasterized histogram has no mass")
    return (h / total).reshape(tuple(dims))


def wasserstein_barycenter(histograms, weights, eps_cells: float = 2.0,
                           max_iters: int = 500, tol: float = 1e-7,
                           want_tape: bool = False):
    """Debiased entropic barycenter of nonnegative unit-mass histograms.

    Alternates scaling updates for every input coupling with a self-transport
    debiasing potential that removes the entropic blur. The potential is
    relaxed a few times per pass; sharp-edged inputs otherwise crawl through
    a slow diffusive tail. Stops once the
    couplings' first-marginal violation max_i ||u_i K v_i - h_i||_1 falls
    below tol; raises NonConvergence if the budget runs out first. tol <= 0
    disables the check and runs exactly max_iters iterations, making the map
    a deterministic unroll (useful for finite-difference comparisons).

    The default budget suits contiguous supports a handful of cells wide or
    more. Scattered point-mass histograms, or grids only a few cells across,
    converge at a visibly slower linear rate at this tolerance; raise
    max_iters for those.
    """
    hs = [np.asarray(h, dtype=float) for h in histograms]
    lam = np.asarray(weights, dtype=float)
    if len(hs) != lam.size:
        raise SizeMismatch(f"{lam.size} weights for {len(hs)} histograms")
    dims = hs[0].shape
    kernels = gibbs_kernels(dims, eps_cells)

    v = [np.ones(dims) for _ in hs]
    d = np.ones(dims)
    b = None
    u = None
    tape = [] if want_tape else None
    residual = np.inf
    converged = False

    for it in range(max_iters):
        a = [_convolve(kernels, vi) for vi in v]
        if it >= 2 and tol > 0:
            # u is one update stale relative to v; their product marginal
            # drifts from h_i only while the scalings still move. The first
            # pass is skipped: before the debiasing potential engages, the
            # stale pairing can be coincidentally exact.
            residual = max(float(np.abs(ui * ai - hi).sum())
                           for ui, ai, hi in zip(u, a, hs))
            if residual < tol:
                converged = True
                break
        u = [hi / np.maximum(ai, _FLOOR) for hi, ai in zip(hs, a)]
        c = [np.maximum(_convolve(kernels, ui), _FLOOR) for ui in u]

        log_b = np.log(np.maximum(d, _FLOOR))
        for li, ci in zip(lam, c):
            log_b = log_b + li * np.log(ci)
        b = np.exp(log_b)

        v = [b / ci for ci in c]
        sweeps = []
        for _ in range(_D_SWEEPS):
            e = np.maximum(_convolve(kernels, d), _FLOOR)
            sweeps.append((d, e))
            d = np.maximum(np.sqrt(d * b / e), _FLOOR)
        if want_tape:
            tape.append((sweeps, b, a, c))

    if tol > 0 and not converged:
        raise NonConvergence("barycenter", max_iters, residual)

    if want_tape:
        return b, (tape, hs, lam, kernels)
    return b


def barycenter_vjp(tape_bundle, gdensity: np.ndarray) -> np.ndarray:
    """Cotangent of the (normalized) weights from one of gdensity on the
    returned density, by unrolling the recorded iterations in reverse."""
    tape, hs, lam, kernels = tape_bundle
    n = len(hs)
    glam = np.zeros(n)
    gb_ext = gdensity
    gv = [np.zeros_like(gdensity) for _ in range(n)]
    gd_next = np.zeros_like(gdensity)

    for sweeps, b, a, c in reversed(tape):
        gb = gb_ext
        gb_ext = np.zeros_like(gdensity)  # only the final iterate is output

        # each relaxation sweep: e = K(d_in), d_out = sqrt(d_in * b / e)
        gd = gd_next
        for d_in, e in reversed(sweeps):
            d_out = np.sqrt(d_in * b / e)
            gb = gb + gd * np.where(b > 0, d_out / (2.0 * b), 0.0)
            ge = -gd * d_out / (2.0 * e)
            gd = gd * d_out / (2.0 * d_in) + _convolve(kernels, ge)

        # v_i = b / c_i  (split the c^2 quotient so it cannot underflow)
        gc = []
        for i in range(n):
            gb = gb + gv[i] / c[i]
            gc.append(-(gv[i] / c[i]) * (b / c[i]))

        # b = d * prod c_i^lam_i, with d the iteration's incoming potential
        d0 = sweeps[0][0]
        gd = gd + gb * np.where(d0 > 0, b / d0, 0.0)
        for i in range(n):
            gc[i] = gc[i] + gb * lam[i] * b / c[i]
            glam[i] += float(np.sum(gb * b * np.log(c[i])))

        # c_i = K(u_i); u_i = h_i / a_i; a_i = K(v_i)
        for i in range(n):
            gu = _convolve(kernels, gc[i])
            ui = hs[i] / np.maximum(a[i], _FLOOR)
            ga = -gu * ui / np.maximum(a[i], _FLOOR)
            gv[i] = _convolve(kernels, ga)

        gd_next = gd

    return glam


@dataclass
class WassBary:
    """Barycentric design parameters: simplex weights over the primitive
    basis for geometry, plus the shared stiffness/membership blends."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    dims: tuple
    lo: np.ndarray
    hi: np.ndarray
    eps_cells: float = 2.0
    max_iters: int = 500
    tol: float = 1e-7

    @classmethod
    def uniform(cls, n_primitives: int, dims, lo, hi, **kw) -> "WassBary":
        w = np.full(n_primitives, 1.0 / n_primitives)
        return cls(w.copy(), w.copy(), w.copy(), tuple(dims),
                   np.asarray(lo, dtype=float), np.asarray(hi, dtype=float),
                   **kw)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta, self.gamma])

    def with_vector(self, vec: np.ndarray) -> "WassBary":
        n = self.alpha.size
        if vec.size != 3 * n:
            raise SizeMismatch(f"expected {3 * n} params, got {vec.size}")
        return WassBary(vec[:n].copy(), vec[n:2 * n].copy(), vec[2 * n:].copy(),
                        self.dims, self.lo, self.hi, self.eps_cells,
                        self.max_iters, self.tol)

    def _weights(self) -> np.ndarray:
        if (self.alpha < -1e-12).any():
            raise DegenerateWeights("barycentric weights must be nonnegative")
        return _normalized(np.clip(self.alpha, 0.0, None), "alpha")

    def _histograms(self, base: BaseParticles, primitives):
        if len(primitives) != self.alpha.size:
            raise SizeMismatch(f"{self.alpha.size} coefficients for "
                               f"{len(primitives)} primitives")
        return [rasterize_occupancy(base.x, p.sdf < 0, self.dims,
                                    self.lo, self.hi) for p in primitives]

    def _fiber(self, base: BaseParticles, primitives, a_hat):
        Rs = np.stack([euler_to_matrix(p.f_euler) for p in primitives])
        R = special_procrustes(np.einsum("i,ipdc->pdc", a_hat, Rs))
        return R @ canonical_heading(base.dim)

    def decode(self, base: BaseParticles, primitives) -> DesignSpec:
        a_hat = self._weights()
        hs = self._histograms(base, primitives)
        density = wasserstein_barycenter(hs, a_hat, self.eps_cells,
                                         self.max_iters, self.tol)
        occ = density / density.max()
        voxel_of = bin_to_voxels(base.x, self.dims, self.lo, self.hi)
        m = base.m0 * occ.reshape(-1)[voxel_of]

        s_mix, r_mix = blend_stiffness_membership(
            self.beta, self.gamma, primitives, base.s0)
        f = self._fiber(base, primitives, a_hat)
        return DesignSpec(x=base.x.copy(), m=m, s=s_mix, r=r_mix, f=f,
                          volume=base.volume, m0=base.m0, s0=base.s0)

    def decode_vjp(self, base: BaseParticles, primitives,
                   dg: DesignGrad) -> np.ndarray:
        a_hat = self._weights()
        hs = self._histograms(base, primitives)
        density, bundle = wasserstein_barycenter(
            hs, a_hat, self.eps_cells, self.max_iters, self.tol,
            want_tape=True)

        voxel_of = bin_to_voxels(base.x, self.dims, self.lo, self.hi)
        g_occ = np.zeros(density.size)
        np.add.at(g_occ, voxel_of, dg.gm * base.m0)

        # occ = density / density.max(); argmax held fixed
        flat = density.reshape(-1)
        peak = flat.max()
        g_flat = g_occ / peak
        g_flat[int(np.argmax(flat))] -= float(g_occ @ flat) / peak ** 2
        glam = barycenter_vjp(bundle, g_flat.reshape(density.shape))
        galpha = _normalize_vjp(np.clip(self.alpha, 0.0, None), glam)
        galpha = np.where(self.alpha > 0, galpha, 0.0)

        gbeta, ggamma = blend_stiffness_membership_vjp(
            self.beta, self.gamma, primitives, base.s0, dg.gs, dg.gr)
        return np.concatenate([galpha, gbeta, ggamma])
