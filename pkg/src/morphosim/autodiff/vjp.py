"""Hand-written vector-Jacobian products of the constitutive models.

Each function takes the forward inputs plus the stress cotangent Gbar and
returns the deformation-gradient cotangent (plus extras where noted). All are
batched over the particle axis and dimension-generic. Frobenius pairing
throughout: <A, B> = sum_ij A_ij B_ij.

The SVD-based paths (sand) use guarded denominators 1/(s_j^2 - s_i^2);
gradients degrade at exactly repeated singular values, which is the known
degeneracy of SVD differentiation. No acceptance gradient path crosses it.
"""
from __future__ import annotations

import numpy as np

from ..state import Material, MaterialParams
from ..sim.materials import polar_decompose, safe_svd


def _T(A):
    return np.swapaxes(A, -1, -2)


def _frob(A, B):
    return np.einsum("nij,nij->n", A, B)


def neo_hookean_vjp(F, Gbar, mat: MaterialParams):
    """P = mu (F - F^-T) + lam ln J F^-T."""
    B = _T(np.linalg.inv(F))
    lnJ = np.log(np.linalg.det(F))
    coef = (mat.mu - mat.lam * lnJ)[:, None, None]
    gB = _frob(Gbar, B)
    return (mat.mu * Gbar
            + coef * (B @ _T(Gbar) @ B)
            + mat.lam * gB[:, None, None] * B)


def stvk_vjp(F, Gbar, mat: MaterialParams):
    """P = F S with S = 2 mu E + lam tr(E) I, E = (F^T F - I)/2."""
    d = F.shape[-1]
    I = np.eye(d)
    E = 0.5 * (_T(F) @ F - I)
    trE = np.trace(E, axis1=-2, axis2=-1)
    S = 2.0 * mat.mu * E + mat.lam * trE[:, None, None] * I
    FtG = _T(F) @ Gbar
    sym = 0.5 * (FtG + _T(FtG))
    trFtG = np.trace(FtG, axis1=-2, axis2=-1)
    return Gbar @ S + 2.0 * mat.mu * (F @ sym) \
        + mat.lam * trFtG[:, None, None] * F


def fluid_vjp(F, Gbar, mat: MaterialParams):
    """P = -k (J^-gamma - 1) J F^-T, a function of J times F^-T."""
    B = _T(np.linalg.inv(F))
    J = np.linalg.det(F)
    phi = -mat.bulk * (J ** (1.0 - mat.gamma) - J)
    dphi = -mat.bulk * ((1.0 - mat.gamma) * J ** (-mat.gamma) - 1.0)
    gB = _frob(Gbar, B)
    return (dphi * J * gB)[:, None, None] * B \
        - phi[:, None, None] * (B @ _T(Gbar) @ B)


def polar_rotation_vjp(F, Rbar, R=None, S=None):
    """Cotangent of F through the rotation factor R of the polar F = R S.

    Uses dR = R [w]_x with (tr(S) I - S) w = 2 axial(skew(R^T dF)) in 3D and
    the scalar analogue in 2D. The solve matrix tr(S) I - S is positive
    definite for non-degenerate F; near-singular systems are regularized.
    """
    if R is None or S is None:
        R, S = polar_decompose(F)
    d = F.shape[-1]
    if d == 2:
        trS = np.trace(S, axis1=-2, axis2=-1)
        trS = np.where(np.abs(trS) < 1e-12, 1e-12, trS)
        Jr = np.array([[0.0, -1.0], [1.0, 0.0]])
        RJ = R @ Jr
        return (_frob(Rbar, RJ) / trS)[:, None, None] * RJ

    A = _T(R) @ Rbar
    skew = 0.5 * (A - _T(A))
    a_g = np.stack([skew[:, 2, 1], skew[:, 0, 2], skew[:, 1, 0]], axis=1)
    trS = np.trace(S, axis1=-2, axis2=-1)
    M = trS[:, None, None] * np.eye(3) - S
    M = M + 1e-12 * np.eye(3)
    q = np.linalg.solve(M, a_g[..., None])[..., 0]
    qx = np.zeros_like(F)
    qx[:, 2, 1] = q[:, 0]; qx[:, 1, 2] = -q[:, 0]
    qx[:, 0, 2] = q[:, 1]; qx[:, 2, 0] = -q[:, 1]
    qx[:, 1, 0] = q[:, 2]; qx[:, 0, 1] = -q[:, 2]
    return 2.0 * (R @ qx)


def fixed_corotated_vjp(F, Gbar, mat: MaterialParams):
    """P = 2 mu (F - R) + lam (J - 1) J F^-T."""
    B = _T(np.linalg.inv(F))
    J = np.linalg.det(F)
    R, S = polar_decompose(F)
    gB = _frob(Gbar, B)
    out = 2.0 * mat.mu * Gbar
    out += polar_rotation_vjp(F, -2.0 * mat.mu * Gbar, R=R, S=S)
    out += (mat.lam * (2.0 * J - 1.0) * J * gB)[:, None, None] * B
    out -= (mat.lam * (J - 1.0) * J)[:, None, None] * (B @ _T(Gbar) @ B)
    return out


def _svd_vjp(U, sig, Vt, Ubar, sigbar, Vbar, den_floor=1e-8):
    """Standard square-SVD VJP with clamped K_ij = 1/(s_j^2 - s_i^2)."""
    d = sig.shape[-1]
    s2 = sig ** 2
    den = s2[:, None, :] - s2[:, :, None]
    sgn = np.where(den >= 0.0, 1.0, -1.0)
    den = sgn * np.maximum(np.abs(den), den_floor)
    K = 1.0 / den
    K[:, np.arange(d), np.arange(d)] = 0.0

    V = _T(Vt)
    UtU = _T(U) @ Ubar
    VtV = _T(V) @ Vbar
    inner = (K * (UtU - _T(UtU))) * sig[:, None, :] \
        + sig[:, :, None] * (K * (VtV - _T(VtV)))
    inner[:, np.arange(d), np.arange(d)] += sigbar
    return U @ inner @ Vt


def sand_vjp(F, Gbar, mat: MaterialParams):
    """Hencky-strain StVK: P = U diag(g(sig)) V^T with
    g_i = (2 mu ln s_i + lam sum ln s) / s_i."""
    U, sig, Vt = safe_svd(F)
    sig = np.clip(sig, 1e-10, None)
    eps = np.log(sig)
    tr = eps.sum(axis=-1, keepdims=True)
    g = (2.0 * mat.mu * eps + mat.lam * tr) / sig

    V = _T(Vt)
    Ubar = Gbar @ V * g[:, None, :]
    Vbar = _T(Gbar) @ U * g[:, None, :]
    diagUGV = np.einsum("nji,njk,nki->ni", U, Gbar, V)
    # dg_i/ds_j = (2 mu d_ij + lam)/(s_i s_j) - d_ij g_i / s_i
    d = sig.shape[-1]
    dg = (2.0 * mat.mu * np.eye(d) + mat.lam) / \
        (sig[:, :, None] * sig[:, None, :])
    dg[:, np.arange(d), np.arange(d)] -= g / sig
    sigbar = np.einsum("ni,nij->nj", diagUGV, dg)
    return _svd_vjp(U, sig, Vt, Ubar, sigbar, Vbar)


def pk1_vjp(F, Gbar, mat: MaterialParams):
    model = mat.model
    if model == Material.NEO_HOOKEAN:
        return neo_hookean_vjp(F, Gbar, mat)
    if model == Material.STVK:
        return stvk_vjp(F, Gbar, mat)
    if model == Material.FLUID:
        return fluid_vjp(F, Gbar, mat)
    if model in (Material.FIXED_COROTATED, Material.SNOW):
        return fixed_corotated_vjp(F, Gbar, mat)
    if model == Material.SAND:
        return sand_vjp(F, Gbar, mat)
    raise ValueError(f"unknown material model {model!r}")


def muscle_vjp(F, fiber, stiffness, a, Gbar):
    """Cotangents of P_m = 4 s (l - a) (F f) f^T, l = |F f|^2.

    Returns (Fbar, sbar, abar).
    """
    Ff = np.einsum("nij,nj->ni", F, fiber)
    Gf = np.einsum("nij,nj->ni", Gbar, fiber)
    l = np.einsum("ni,ni->n", Ff, Ff)
    dot = np.einsum("ni,ni->n", Gf, Ff)       # <Gbar, (Ff) f^T>
    lead = ((l - a)[:, None] * Gf + 2.0 * dot[:, None] * Ff)
    Fbar = 4.0 * stiffness[:, None, None] * lead[:, :, None] * fiber[:, None, :]
    sbar = 4.0 * (l - a) * dot
    abar = -4.0 * stiffness * dot
    return Fbar, sbar, abar


def total_stress_vjp(F, fiber, stiffness, a, material_id, materials, Gbar):
    """VJP of total_stress. Returns (Fbar, sbar, abar)."""
    Fbar = np.zeros_like(F)
    for mid in np.unique(material_id):
        mask = material_id == mid
        Fbar[mask] = pk1_vjp(F[mask], Gbar[mask], materials[mid])
    Fm, sbar, abar = muscle_vjp(F, fiber, stiffness, a, Gbar)
    return Fbar + Fm, sbar, abar
