"""Parameter-vector design decoders.

Four families map a flat trainable vector to a DesignSpec over a fixed base
particle set: per-particle logits, per-voxel logits, a coordinate MLP, and a
coordinate network with mixed per-node activations. Muscle fiber direction is
fixed to the canonical heading for all of them; geometry/stiffness/membership
go through sigmoid, sigmoid, and softmax heads.

Each decoder has a hand-written VJP (`decode_vjp`) mapping a DesignGrad back
to a flat parameter gradient. Decoders are stateless: the VJP recomputes the
forward intermediates it needs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeMismatch, SizeMismatch, UnmappedParticle
from .base import BaseParticles, DesignGrad, DesignSpec


def canonical_heading(dim: int) -> np.ndarray:
    e = np.zeros(dim)
    e[0] = 1.0
    return e


def sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _softmax_vjp(r, gr):
    # rows of r are softmax outputs; returns cotangent of the logits
    inner = np.sum(r * gr, axis=-1, keepdims=True)
    return r * (gr - inner)


def _heads_to_spec(base: BaseParticles, m_logit, s_logit, r_logit) -> DesignSpec:
    n, d = base.x.shape
    return DesignSpec(
        x=base.x.copy(),
        m=base.m0 * sigmoid(m_logit),
        s=base.s0 * sigmoid(s_logit),
        r=softmax(r_logit, axis=1),
        f=np.tile(canonical_heading(d), (n, 1)),
        volume=base.volume, m0=base.m0, s0=base.s0)


def _heads_vjp(base: BaseParticles, m_logit, s_logit, r_logit, dg: DesignGrad):
    sm = sigmoid(m_logit)
    ss = sigmoid(s_logit)
    gm = dg.gm * base.m0 * sm * (1.0 - sm)
    gs = dg.gs * base.s0 * ss * (1.0 - ss)
    gr = _softmax_vjp(softmax(r_logit, axis=1), dg.gr)
    return gm, gs, gr


def bin_to_voxels(x: np.ndarray, dims, lo, hi) -> np.ndarray:
    """Flat voxel index per point for a dims grid spanning [lo, hi).
    Raises UnmappedParticle for points outside the grid."""
    dims = np.asarray(dims, dtype=int)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    cell = np.floor((x - lo) / (hi - lo) * dims).astype(int)
    bad = np.any((cell < 0) | (cell >= dims), axis=1)
    if bad.any():
        raise UnmappedParticle(
            f"{int(bad.sum())} points fall outside the voxel grid")
    strides = np.append(np.cumprod(dims[::-1])[::-1][1:], 1)
    return cell @ strides


# ---------------------------------------------------------------------------
# per-particle and per-voxel logits


@dataclass
class PerParticle:
    """One (m, s) logit pair plus a K-vector of membership logits per base
    particle."""

    m_logit: np.ndarray
    s_logit: np.ndarray
    r_logit: np.ndarray

    @classmethod
    def zeros(cls, n: int, k: int) -> "PerParticle":
        return cls(np.zeros(n), np.zeros(n), np.zeros((n, k)))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.m_logit, self.s_logit,
                               self.r_logit.reshape(-1)])

    def with_vector(self, vec: np.ndarray) -> "PerParticle":
        n = self.m_logit.size
        k = self.r_logit.shape[1]
        if vec.size != n * (2 + k):
            raise SizeMismatch(f"expected {n * (2 + k)} params, got {vec.size}")
        return PerParticle(vec[:n].copy(), vec[n:2 * n].copy(),
                           vec[2 * n:].reshape(n, k).copy())

    def decode(self, base: BaseParticles) -> DesignSpec:
        if self.m_logit.size != base.n:
            raise SizeMismatch(
                f"{self.m_logit.size} logits for {base.n} base particles")
        return _heads_to_spec(base, self.m_logit, self.s_logit, self.r_logit)

    def decode_vjp(self, base: BaseParticles, dg: DesignGrad) -> np.ndarray:
        gm, gs, gr = _heads_vjp(base, self.m_logit, self.s_logit,
                                self.r_logit, dg)
        return np.concatenate([gm, gs, gr.reshape(-1)])


@dataclass
class PerVoxel:
    """Per-voxel logits broadcast to particles through a voxel-to-particle
    map. Far fewer parameters than PerParticle for the same base set."""

    m_logit: np.ndarray
    s_logit: np.ndarray
    r_logit: np.ndarray
    voxel_of: np.ndarray  # (n_base,) voxel index per base particle

    @classmethod
    def build(cls, base: BaseParticles, dims, lo, hi, k: int) -> "PerVoxel":
        """Bin base particles into a dims voxel grid spanning [lo, hi)."""
        flat = bin_to_voxels(base.x, dims, lo, hi)
        v = int(np.prod(dims))
        return cls(np.zeros(v), np.zeros(v), np.zeros((v, k)), flat)

    @property
    def n_voxels(self) -> int:
        return self.m_logit.size

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.m_logit, self.s_logit,
                               self.r_logit.reshape(-1)])

    def with_vector(self, vec: np.ndarray) -> "PerVoxel":
        v = self.n_voxels
        k = self.r_logit.shape[1]
        if vec.size != v * (2 + k):
            raise SizeMismatch(f"expected {v * (2 + k)} params, got {vec.size}")
        return PerVoxel(vec[:v].copy(), vec[v:2 * v].copy(),
                        vec[2 * v:].reshape(v, k).copy(), self.voxel_of)

    def decode(self, base: BaseParticles) -> DesignSpec:
        if self.voxel_of.size != base.n:
            raise SizeMismatch("voxel map does not cover the base set")
        idx = self.voxel_of
        return _heads_to_spec(base, self.m_logit[idx], self.s_logit[idx],
                              self.r_logit[idx])

    def decode_vjp(self, base: BaseParticles, dg: DesignGrad) -> np.ndarray:
        idx = self.voxel_of
        gm_p, gs_p, gr_p = _heads_vjp(base, self.m_logit[idx],
                                      self.s_logit[idx], self.r_logit[idx], dg)
        v = self.n_voxels
        gm = np.zeros(v)
        gs = np.zeros(v)
        gr = np.zeros_like(self.r_logit)
        np.add.at(gm, idx, gm_p)
        np.add.at(gs, idx, gs_p)
        np.add.at(gr, idx, gr_p)
        return np.concatenate([gm, gs, gr.reshape(-1)])


# ---------------------------------------------------------------------------
# coordinate featurization shared by the MLP and mixed-activation decoders


def coordinate_features(x: np.ndarray, center=None) -> np.ndarray:
    """Per-point features: centered coordinates, distance within each
    coordinate plane (3D only), and radius from the body center."""
    x = np.asarray(x, dtype=float)
    if center is None:
        center = x.mean(axis=0)
    rel = x - center
    cols = [rel]
    d = x.shape[1]
    if d == 3:
        for a, b in [(0, 1), (0, 2), (1, 2)]:
            cols.append(np.sqrt(rel[:, a] ** 2 + rel[:, b] ** 2 + 1e-30)[:, None])
    cols.append(np.linalg.norm(rel, axis=1)[:, None])
    return np.concatenate(cols, axis=1)


def n_features(dim: int) -> int:
    return dim + (3 if dim == 3 else 0) + 1


# ---------------------------------------------------------------------------
# small dense nets with hand-written backward passes


class _Net:
    """Dense net with per-layer, per-node activations ("tanh", "sin",
    "sigmoid", "gauss", "selu", "abs", "log", "exp", or "linear")."""

    def __init__(self, sizes, activations, rng, w_scale=1.0):
        self.sizes = list(sizes)
        self.acts = activations  # list of per-layer lists, len sizes-1
        self.W = [w_scale * rng.standard_normal((sizes[i], sizes[i + 1]))
                  / np.sqrt(sizes[i]) for i in range(len(sizes) - 1)]
        self.b = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]

    @staticmethod
    def _act(name, z):
        if name == "linear":
            return z
        if name == "tanh":
            return np.tanh(z)
        if name == "sin":
            return np.sin(z)
        if name == "sigmoid":
            return sigmoid(z)
        if name == "gauss":
            return np.exp(-z * z)
        if name == "selu":
            a, lam = 1.6732632423543772, 1.0507009873554805
            return lam * np.where(z > 0, z, a * (np.exp(np.minimum(z, 0)) - 1))
        if name == "abs":
            return np.abs(z)
        if name == "log":
            return np.log1p(np.abs(z))
        if name == "exp":
            return np.exp(np.clip(z, -10.0, 10.0))
        raise ConfigError(f"unknown activation {name!r}")

    @staticmethod
    def _act_grad(name, z, a):
        if name == "linear":
            return np.ones_like(z)
        if name == "tanh":
            return 1.0 - a * a
        if name == "sin":
            return np.cos(z)
        if name == "sigmoid":
            return a * (1.0 - a)
        if name == "gauss":
            return -2.0 * z * a
        if name == "selu":
            al, lam = 1.6732632423543772, 1.0507009873554805
            return np.where(z > 0, lam, lam * al * np.exp(np.minimum(z, 0)))
        if name == "abs":
            return np.sign(z)
        if name == "log":
            return np.sign(z) / (1.0 + np.abs(z))
        if name == "exp":
            return np.where(np.abs(z) < 10.0, a, 0.0)
        raise ConfigError(f"unknown activation {name!r}")

    def forward(self, z, want_cache=False):
        cache = [] if want_cache else None
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            pre = z @ W + b
            out = np.column_stack([
                self._act(self.acts[i][j], pre[:, j])
                for j in range(pre.shape[1])])
            if want_cache:
                cache.append((z, pre, out))
            z = out
        return (z, cache) if want_cache else z

    def backward(self, cache, gout):
        """Accumulates (gW, gb) lists; returns them plus the input cotangent."""
        gW = [np.zeros_like(W) for W in self.W]
        gb = [np.zeros_like(b) for b in self.b]
        g = gout
        for i in reversed(range(len(self.W))):
            z, pre, out = cache[i]
            dact = np.column_stack([
                self._act_grad(self.acts[i][j], pre[:, j], out[:, j])
                for j in range(pre.shape[1])])
            gpre = g * dact
            gW[i] = z.T @ gpre
            gb[i] = gpre.sum(axis=0)
            g = gpre @ self.W[i].T
        return gW, gb, g

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1)
                               for pair in zip(self.W, self.b) for a in pair])

    def set_vector(self, vec: np.ndarray):
        o = 0
        for i in range(len(self.W)):
            n = self.W[i].size
            self.W[i] = vec[o:o + n].reshape(self.W[i].shape).copy()
            o += n
            n = self.b[i].size
            self.b[i] = vec[o:o + n].copy()
            o += n
        if o != vec.size:
            raise SizeMismatch(f"expected {o} params, got {vec.size}")


def _flatten_grads(gWb_per_net):
    parts = []
    for gW, gb in gWb_per_net:
        for w, b in zip(gW, gb):
            parts.append(w.reshape(-1))
            parts.append(b.reshape(-1))
    return np.concatenate(parts)


class _CoordinateDecoder:
    """Shared machinery: three nets (m, s, r heads) over coordinate features."""

    def __init__(self, nets, center=None):
        self.net_m, self.net_s, self.net_r = nets
        self.center = center

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.net_m.vector, self.net_s.vector,
                               self.net_r.vector])

    def with_vector(self, vec: np.ndarray):
        import copy
        new = copy.deepcopy(self)
        sizes = [new.net_m.vector.size, new.net_s.vector.size,
                 new.net_r.vector.size]
        if vec.size != sum(sizes):
            raise SizeMismatch(f"expected {sum(sizes)} params, got {vec.size}")
        o = 0
        for net, s in zip([new.net_m, new.net_s, new.net_r], sizes):
            net.set_vector(vec[o:o + s])
            o += s
        return new

    def decode(self, base: BaseParticles) -> DesignSpec:
        z = coordinate_features(base.x, self.center)
        return _heads_to_spec(base, self.net_m.forward(z)[:, 0],
                              self.net_s.forward(z)[:, 0],
                              self.net_r.forward(z))

    def decode_vjp(self, base: BaseParticles, dg: DesignGrad) -> np.ndarray:
        z = coordinate_features(base.x, self.center)
        m_out, m_cache = self.net_m.forward(z, want_cache=True)
        s_out, s_cache = self.net_s.forward(z, want_cache=True)
        r_out, r_cache = self.net_r.forward(z, want_cache=True)
        gm, gs, gr = _heads_vjp(base, m_out[:, 0], s_out[:, 0], r_out, dg)
        gWm, gbm, _ = self.net_m.backward(m_cache, gm[:, None])
        gWs, gbs, _ = self.net_s.backward(s_cache, gs[:, None])
        gWr, gbr, _ = self.net_r.backward(r_cache, gr)
        return _flatten_grads([(gWm, gbm), (gWs, gbs), (gWr, gbr)])


class ImplicitMLP(_CoordinateDecoder):
    """Smooth coordinate-to-design mapping: per head, a 2-hidden-layer,
    32-wide tanh network over the coordinate features."""

    def __init__(self, dim: int, k: int, hidden: int = 32, seed: int = 0,
                 center=None):
        rng = np.random.default_rng(seed)
        fin = n_features(dim)

        def net(out):
            sizes = [fin, hidden, hidden, out]
            acts = [["tanh"] * hidden, ["tanh"] * hidden, ["linear"] * out]
            return _Net(sizes, acts, rng)

        super().__init__((net(1), net(1), net(k)), center)
        self.dim, self.k, self.hidden = dim, k, hidden


DEFAULT_NODE_ACTIVATIONS = ("sin", "sigmoid")
EXTENDED_NODE_ACTIVATIONS = ("sigmoid", "tanh", "sin", "gauss", "selu",
                             "abs", "log", "exp")


class DiffCPPN(_CoordinateDecoder):
    """Coordinate network with per-node activations cycling through a fixed
    set (default {sin, sigmoid}), 3 hidden layers of 20 nodes. Topology
    weights are real-valued, so the whole map is differentiable."""

    def __init__(self, dim: int, k: int, hidden: int = 20, layers: int = 3,
                 activations=DEFAULT_NODE_ACTIVATIONS, seed: int = 0,
                 center=None):
        rng = np.random.default_rng(seed)
        fin = n_features(dim)
        activations = tuple(activations)

        def net(out):
            sizes = [fin] + [hidden] * layers + [out]
            acts = [[activations[j % len(activations)] for j in range(hidden)]
                    for _ in range(layers)] + [["linear"] * out]
            return _Net(sizes, acts, rng)

        super().__init__((net(1), net(1), net(k)), center)
        self.dim, self.k = dim, k
        self.activations = activations
