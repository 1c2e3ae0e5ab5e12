"""Procedural terrain: Perlin gradient noise, heightmaps, height-field SDF.

The world's vertical axis is the last coordinate (y in 2D, z in 3D); a
heightmap lives on the remaining lateral axes. For flat terrain the SDF is
exactly p_up - height; for sloped terrain it is the standard height-field
approximation with a unit normal from the interpolated gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

_FADE = lambda t: t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


class PerlinNoise:
    """Classic gradient noise on a seeded permutation table.

    Supports 1 and 2 input dimensions (lateral axes of 2D and 3D worlds).
    Values are roughly in [-1, 1]; fractal summation over `octaves` with the
    given lacunarity (frequency ratio) and persistence (amplitude ratio).
    """

    def __init__(self, seed: int, octaves: int = 4, lacunarity: float = 2.0,
                 persistence: float = 0.5):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(256)
        self.perm = np.concatenate([perm, perm]).astype(np.int64)
        self.octaves = int(octaves)
        self.lacunarity = float(lacunarity)
        self.persistence = float(persistence)
        # 8 unit gradients for 2D, scalar gradients for 1D
        ang = np.arange(8) * (2.0 * np.pi / 8.0) + np.pi / 8.0
        self.grad2 = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        self.grad1 = (np.arange(8) / 3.5) - 1.0  # 8 slopes in [-1, 1]

    def _hash(self, *idx):
        h = self.perm[idx[0] & 255]
        for i in idx[1:]:
            h = self.perm[(h + i) & 255]
        return h

    def _noise1(self, x):
        xi = np.floor(x).astype(np.int64)
        xf = x - xi
        g0 = self.grad1[self._hash(xi) & 7]
        g1 = self.grad1[self._hash(xi + 1) & 7]
        u = _FADE(xf)
        return (1.0 - u) * g0 * xf + u * g1 * (xf - 1.0)

    def _noise2(self, x, y):
        xi = np.floor(x).astype(np.int64)
        yi = np.floor(y).astype(np.int64)
        xf, yf = x - xi, y - yi
        u, v = _FADE(xf), _FADE(yf)

        def dot_corner(ox, oy):
            g = self.grad2[self._hash(xi + ox, yi + oy) & 7]
            return g[..., 0] * (xf - ox) + g[..., 1] * (yf - oy)

        n00 = dot_corner(0, 0)
        n10 = dot_corner(1, 0)
        n01 = dot_corner(0, 1)
        n11 = dot_corner(1, 1)
        nx0 = n00 * (1 - u) + n10 * u
        nx1 = n01 * (1 - u) + n11 * u
        return nx0 * (1 - v) + nx1 * v

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        total = np.zeros(pts.shape[0])
        amp, freq, norm = 1.0, 1.0, 0.0
        for _ in range(self.octaves):
            if pts.shape[1] == 1:
                total += amp * self._noise1(pts[:, 0] * freq)
            elif pts.shape[1] == 2:
                total += amp * self._noise2(pts[:, 0] * freq, pts[:, 1] * freq)
            else:
                raise ConfigError("Perlin noise supports 1 or 2 lateral axes")
            norm += amp
            amp *= self.persistence
            freq *= self.lacunarity
        return total / norm


@dataclass
class Heightmap:
    """Sampled terrain height over the lateral axes.

    values: (m,) for a 2D world or (m, m) for a 3D world
    extent: lateral world size covered by the samples (meters)
    """

    values: np.ndarray
    extent: float

    @property
    def lateral_dim(self) -> int:
        return self.values.ndim

    def height(self, lateral: np.ndarray) -> np.ndarray:
        """Interpolated height at (k, lateral_dim) lateral positions."""
        lateral = np.atleast_2d(lateral)
        m = self.values.shape[0]
        t = np.clip(lateral / self.extent, 0.0, 1.0) * (m - 1)
        i0 = np.clip(t.astype(np.int64), 0, m - 2)
        f = t - i0
        if self.lateral_dim == 1:
            v = self.values
            return v[i0[:, 0]] * (1 - f[:, 0]) + v[i0[:, 0] + 1] * f[:, 0]
        v = self.values
        x0, y0 = i0[:, 0], i0[:, 1]
        fx, fy = f[:, 0], f[:, 1]
        return (v[x0, y0] * (1 - fx) * (1 - fy)
                + v[x0 + 1, y0] * fx * (1 - fy)
                + v[x0, y0 + 1] * (1 - fx) * fy
                + v[x0 + 1, y0 + 1] * fx * fy)

    def gradient(self, lateral: np.ndarray) -> np.ndarray:
        """dh/d(lateral), piecewise from the interpolation cells."""
        lateral = np.atleast_2d(lateral)
        m = self.values.shape[0]
        cell = self.extent / (m - 1)
        t = np.clip(lateral / self.extent, 0.0, 1.0) * (m - 1)
        i0 = np.clip(t.astype(np.int64), 0, m - 2)
        f = t - i0
        v = self.values
        if self.lateral_dim == 1:
            return ((v[i0[:, 0] + 1] - v[i0[:, 0]]) / cell)[:, None]
        x0, y0 = i0[:, 0], i0[:, 1]
        fx, fy = f[:, 0], f[:, 1]
        gx = ((v[x0 + 1, y0] - v[x0, y0]) * (1 - fy)
              + (v[x0 + 1, y0 + 1] - v[x0, y0 + 1]) * fy) / cell
        gy = ((v[x0, y0 + 1] - v[x0, y0]) * (1 - fx)
              + (v[x0 + 1, y0 + 1] - v[x0 + 1, y0]) * fx) / cell
        return np.stack([gx, gy], axis=1)


def gen_heightmap(seed: int, dim: int, resolution: int = 64,
                  extent: float = 1.0, base: float = 0.1,
                  amplitude: float = 0.0, octaves: int = 4,
                  lacunarity: float = 2.0, persistence: float = 0.5,
                  feature_scale: float = 0.3) -> Heightmap:
    """Perlin-noise heightmap for a world of spatial dimension `dim`.

    amplitude = 0 produces exactly flat terrain at the base height.
    feature_scale is the world-space size of the largest noise feature.
    """
    if dim not in (2, 3):
        raise ConfigError(f"heightmap dim must be 2 or 3, got {dim}")
    lateral = dim - 1
    coords = np.linspace(0.0, extent, resolution)
    if lateral == 1:
        pts = coords[:, None]
        shape = (resolution,)
    else:
        gx, gy = np.meshgrid(coords, coords, indexing="ij")
        pts = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
        shape = (resolution, resolution)
    values = np.full(int(np.prod(shape)), float(base))
    if amplitude > 0.0:
        noise = PerlinNoise(seed, octaves=octaves, lacunarity=lacunarity,
                            persistence=persistence)
        values = base + amplitude * noise(pts / feature_scale)
    return Heightmap(values=values.reshape(shape), extent=extent)


@dataclass
class TerrainSDF:
    """Height-field terrain with a boundary condition attached.

    sdf(p) = p_up - h(lateral): negative inside the ground. normal() is the
    unit upward normal of the height field. bc is one of
    "sticky" | "slip" | "separate" | "friction"; friction uses `friction`.
    """

    heightmap: Heightmap
    bc: str = "sticky"
    friction: float = 0.5

    def __post_init__(self):
        if self.bc not in ("sticky", "slip", "separate", "friction"):
            raise ConfigError(f"unknown boundary condition {self.bc!r}")

    def sdf(self, p: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p)
        return p[:, -1] - self.heightmap.height(p[:, :-1])

    def normal(self, p: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p)
        g = self.heightmap.gradient(p[:, :-1])
        n = np.concatenate([-g, np.ones((p.shape[0], 1))], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)
