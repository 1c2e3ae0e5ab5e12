"""Constitutive models: first Piola-Kirchhoff stress, muscle stress, plasticity.

All functions are batched over a leading particle axis and dimension-generic
(d = 2 or 3). Elastic energies use the Lame pair (mu, lam); the fluid is a
weakly compressible Tait-style closure whose stress depends on J only.
"""
from __future__ import annotations

import numpy as np

from ..errors import NonInvertibleF
from ..state import Material, MaterialParams


def _det(F):
    return np.linalg.det(F)


def _inv_T(F):
    return np.swapaxes(np.linalg.inv(F), -1, -2)


def safe_svd(F):
    """SVD with proper rotations: det(U) = det(V) = +1.

    Sign flips are pushed into the last singular value, which therefore goes
    negative for inverted elements. This is the convention the plastic
    projections rely on to un-invert particles.
    """
    U, sig, Vt = np.linalg.svd(F)
    sig = sig.copy()
    du = np.linalg.det(U) < 0.0
    U = U.copy()
    U[du, :, -1] *= -1.0
    sig[du, -1] *= -1.0
    dv = np.linalg.det(np.swapaxes(Vt, -1, -2)) < 0.0
    Vt = Vt.copy()
    Vt[dv, -1, :] *= -1.0
    sig[dv, -1] *= -1.0
    return U, sig, Vt


def polar_rotation(F):
    """Rotation factor R of the polar decomposition F = R S."""
    U, _, Vt = safe_svd(F)
    return U @ Vt


def polar_decompose(F):
    """(R, S) with F = R S, R a proper rotation, S symmetric."""
    R = polar_rotation(F)
    S = np.swapaxes(R, -1, -2) @ F
    return R, 0.5 * (S + np.swapaxes(S, -1, -2))


def _require_invertible(J, where: str):
    if np.any(J <= 0.0):
        idx = int(np.argmax(J <= 0.0))
        raise NonInvertibleF(f"det(F) <= 0 in {where} (first particle {idx}, "
                             f"J = {J.flat[idx]:.3e})")


def pk1_stress(F: np.ndarray, mat: MaterialParams) -> np.ndarray:
    """First Piola-Kirchhoff stress P(F) of the passive material."""
    model = mat.model
    if model == Material.NEO_HOOKEAN:
        J = _det(F)
        _require_invertible(J, "neo-Hookean stress")
        B = _inv_T(F)
        return mat.mu * (F - B) + mat.lam * np.log(J)[..., None, None] * B

    if model == Material.FIXED_COROTATED:
        J = _det(F)
        B = _inv_T(F)
        R = polar_rotation(F)
        return 2.0 * mat.mu * (F - R) \
            + mat.lam * ((J - 1.0) * J)[..., None, None] * B

    if model == Material.STVK:
        J = _det(F)
        _require_invertible(J, "StVK stress")
        d = F.shape[-1]
        I = np.eye(d)
        E = 0.5 * (np.swapaxes(F, -1, -2) @ F - I)
        trE = np.trace(E, axis1=-2, axis2=-1)
        S = 2.0 * mat.mu * E + mat.lam * trE[..., None, None] * I
        return F @ S

    if model == Material.FLUID:
        J = _det(F)
        _require_invertible(J, "fluid stress")
        B = _inv_T(F)
        # Cauchy stress -k (J^-gamma - 1) I, pulled back: P = J sigma F^-T
        p = -mat.bulk * (J ** (-mat.gamma) - 1.0)
        return (p * J)[..., None, None] * B

    if model == Material.SAND:
        return _sand_stress(F, mat)

    if model == Material.SNOW:
        # corotated elasticity on the (already clamped) elastic F
        J = _det(F)
        B = _inv_T(F)
        R = polar_rotation(F)
        return 2.0 * mat.mu * (F - R) \
            + mat.lam * ((J - 1.0) * J)[..., None, None] * B

    raise ValueError(f"unknown material model {model!r}")


def _sand_stress(F, mat: MaterialParams):
    """St. Venant-Kirchhoff in Hencky strain: P = U diag(g(sig)) V^T."""
    U, sig, Vt = safe_svd(F)
    if np.any(sig <= 0.0):
        idx = int(np.argmax(np.any(sig <= 0.0, axis=-1)))
        raise NonInvertibleF(f"inverted sand particle {idx}")
    eps = np.log(sig)
    tr = eps.sum(axis=-1, keepdims=True)
    g = (2.0 * mat.mu * eps + mat.lam * tr) / sig
    return (U * g[..., None, :]) @ Vt


def muscle_pk1(F: np.ndarray, fiber: np.ndarray, stiffness: np.ndarray,
               a: np.ndarray) -> np.ndarray:
    """Contractile stress of the fiber energy s * (l - a)^2 with l = |F f|^2.

    dPsi/dF = 4 s (l - a) (F f) f^T. Passive particles carry s = 0 and the
    term vanishes.
    """
    Ff = np.einsum("nij,nj->ni", F, fiber)
    l = np.einsum("ni,ni->n", Ff, Ff)
    coef = 4.0 * stiffness * (l - a)
    return coef[:, None, None] * Ff[:, :, None] * fiber[:, None, :]


def total_stress(F, fiber, stiffness, a, material_id, materials) -> np.ndarray:
    """Passive + active first Piola-Kirchhoff stress, per particle."""
    P = np.zeros_like(F)
    for mid in np.unique(material_id):
        mask = material_id == mid
        P[mask] = pk1_stress(F[mask], materials[mid])
    P += muscle_pk1(F, fiber, stiffness, a)
    return P


def plastic_project(F: np.ndarray, mat: MaterialParams) -> np.ndarray:
    """Return-map the trial deformation gradient of a plastic material.

    SNOW clamps singular values to [1 - theta_c, 1 + theta_s].
    SAND runs the Drucker-Prager return mapping on the Hencky strain.
    FLUID renormalizes to J^(1/d) I, preserving volume and discarding shear
    (its stress is J-only, so the forward dynamics are unchanged).
    Elastic materials are returned untouched.
    """
    model = mat.model
    if model == Material.SNOW:
        U, sig, Vt = safe_svd(F)
        sig = np.clip(sig, 1.0 - mat.theta_c, 1.0 + mat.theta_s)
        return (U * sig[..., None, :]) @ Vt

    if model == Material.SAND:
        return _sand_project(F, mat)

    if model == Material.FLUID:
        d = F.shape[-1]
        J = np.clip(_det(F), 1e-8, None)
        eye = np.eye(d)
        return J[..., None, None] ** (1.0 / d) * eye

    return F


def _sand_project(F, mat: MaterialParams):
    d = F.shape[-1]
    U, sig, Vt = safe_svd(F)
    sig = np.clip(sig, 1e-8, None)
    eps = np.log(sig)
    tr = eps.sum(axis=-1)
    dev = eps - tr[..., None] / d
    dev_norm = np.linalg.norm(dev, axis=-1)

    phi = np.deg2rad(mat.friction_angle)
    alpha = np.sqrt(2.0 / 3.0) * 2.0 * np.sin(phi) / (3.0 - np.sin(phi))

    # yield amount; expansion (tr > 0) projects to the cone apex
    dg = dev_norm + alpha * tr * (d * mat.lam + 2.0 * mat.mu) / (2.0 * mat.mu)
    apex = (tr > 0.0) | (dev_norm < 1e-12)
    plastic = (~apex) & (dg > 0.0)

    new_eps = eps.copy()
    if plastic.any():
        scale = dg[plastic] / dev_norm[plastic]
        new_eps[plastic] = eps[plastic] - scale[..., None] * dev[plastic]
    if apex.any():
        new_eps[apex] = 0.0

    new_sig = np.exp(new_eps)
    return (U * new_sig[..., None, :]) @ Vt


def apply_plasticity(F_trial, material_id, materials):
    out = F_trial
    touched = False
    for mid in np.unique(material_id):
        mat = materials[mid]
        if mat.model in (Material.SNOW, Material.SAND, Material.FLUID):
            if not touched:
                out = F_trial.copy()
                touched = True
            mask = material_id == mid
            out[mask] = plastic_project(F_trial[mask], mat)
    return out
