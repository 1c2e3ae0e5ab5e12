"""Semi-automatic robot annotation: muscle grouping by K-means with
per-group fiber directions from PCA, and mesh-to-particle ingestion via
ray-parity inside tests.
"""
from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from ..errors import ConfigError, EmptyCluster, MeshError, OpenMesh
from .decoders import canonical_heading

_KMEANS_RETRIES = 8
_KMEANS_ITERS = 100


def _lloyd(x: np.ndarray, k: int, rng) -> np.ndarray:
    """One K-means run; returns assignments or None if a cluster emptied."""
    n = x.shape[0]
    centers = x[rng.choice(n, size=k, replace=False)].copy()
    assign = np.full(n, -1)
    for _ in range(_KMEANS_ITERS):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        counts = np.bincount(new_assign, minlength=k)
        if (counts == 0).any():
            return None
        if (new_assign == assign).all():
            break
        assign = new_assign
        for j in range(k):
            centers[j] = x[assign == j].mean(axis=0)
    return assign


def kmeans(x: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Seeded Lloyd's algorithm with bounded re-seeding on empty clusters."""
    if k < 1:
        raise ConfigError(f"need k >= 1, got {k}")
    if x.shape[0] < k:
        raise ConfigError(f"{x.shape[0]} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    for _ in range(_KMEANS_RETRIES):
        assign = _lloyd(x, k, rng)
        if assign is not None:
            return assign
    raise EmptyCluster(f"k-means emptied a cluster {_KMEANS_RETRIES} times")


def _principal_axis(pts: np.ndarray, heading: np.ndarray) -> np.ndarray:
    """First principal axis of a point cluster, sign-aligned with heading.
    Degenerate clusters (single point, zero spread) fall back to heading."""
    if pts.shape[0] < 2:
        return heading.copy()
    centered = pts - pts.mean(axis=0)
    _, svals, Vt = np.linalg.svd(centered, full_matrices=False)
    if svals[0] < 1e-12:
        return heading.copy()
    axis = Vt[0]
    if axis @ heading < 0:
        axis = -axis
    return axis


def annotate_muscles(points: np.ndarray, k: int, heading=None, seed: int = 0):
    """Group points into k muscles and orient each along its longest spread.

    Returns (r, f): hard one-hot membership rows (n, k) and per-point unit
    fiber directions (n, dim)."""
    x = np.asarray(points, dtype=float)
    n, dim = x.shape
    heading = (canonical_heading(dim) if heading is None
               else np.asarray(heading, dtype=float))
    assign = kmeans(x, k, seed)

    r = np.zeros((n, k))
    r[np.arange(n), assign] = 1.0
    f = np.empty((n, dim))
    for j in range(k):
        member = assign == j
        f[member] = _principal_axis(x[member], heading)
    return r, f


# ---------------------------------------------------------------------------
# mesh ingestion


def load_obj(source) -> tuple[np.ndarray, np.ndarray]:
    """Parse the v/f subset of an ASCII OBJ file (path or text). Faces may be
    polygons; they are fan-triangulated. Returns (vertices, faces)."""
    text = source
    if isinstance(source, (str, Path)) and "\n" not in str(source) \
            and Path(source).exists():
        text = Path(source).read_text()
    verts, faces = [], []
    for lineno, raw in enumerate(str(text).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise MeshError(f"line {lineno}: vertex needs 3 coordinates")
            verts.append([float(c) for c in rest[:3]])
        elif tag == "f":
            if len(rest) < 3:
                raise MeshError(f"line {lineno}: face needs >= 3 vertices")
            idx = []
            for tok in rest:
                head = tok.split("/")[0]
                i = int(head)
                if i < 0:
                    i = len(verts) + 1 + i
                if i < 1:
                    raise MeshError(f"line {lineno}: bad vertex index {tok}")
                idx.append(i - 1)
            for a, b in zip(idx[1:-1], idx[2:]):
                faces.append([idx[0], a, b])
        # other record types (vn, vt, o, g, s, usemtl, ...) are ignored
    if not verts or not faces:
        raise MeshError("OBJ source has no v/f records")
    v = np.asarray(verts, dtype=float)
    f = np.asarray(faces, dtype=int)
    if (f >= len(v)).any():
        raise MeshError("face references a missing vertex")
    return v, f


def _warn_if_open(faces: np.ndarray):
    """A watertight, consistently wound mesh uses every undirected edge
    exactly twice, once in each direction."""
    directed = {}
    for tri in faces:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            directed[(int(a), int(b))] = directed.get((int(a), int(b)), 0) + 1
    for (a, b), cnt in directed.items():
        if cnt != 1 or directed.get((b, a), 0) != 1:
            warnings.warn("mesh is not closed; inside/outside parity is "
                          "unreliable", OpenMesh)
            return


def ingest_mesh(vertices: np.ndarray, faces: np.ndarray,
                points: np.ndarray) -> np.ndarray:
    """Inside/outside occupancy per query point by ray parity: a ray along
    the canonical heading crosses a closed surface an odd number of times
    exactly when the origin is inside."""
    v = np.asarray(vertices, dtype=float)
    f = np.asarray(faces, dtype=int)
    x = np.asarray(points, dtype=float)
    if v.shape[1] != 3 or x.shape[1] != 3:
        raise MeshError("mesh ingestion works on 3D vertices and points")
    _warn_if_open(f)

    # tiny fixed tilt dodges edge-on and vertex-on hits deterministically
    direction = np.array([1.0, 1.37e-7, 2.41e-7])
    direction /= np.linalg.norm(direction)

    a = v[f[:, 0]]
    e1 = v[f[:, 1]] - a
    e2 = v[f[:, 2]] - a
    pvec = np.cross(direction, e2)                     # (T, 3)
    det = np.einsum("td,td->t", e1, pvec)              # (T,)
    ok = np.abs(det) > 1e-14
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)

    inside = np.zeros(x.shape[0], dtype=bool)
    for p in range(x.shape[0]):
        tvec = x[p] - a                                # (T, 3)
        u = np.einsum("td,td->t", tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1)
        w = (qvec @ direction) * inv_det
        t = np.einsum("td,td->t", qvec, e2) * inv_det
        hit = ok & (u >= 0) & (w >= 0) & (u + w <= 1) & (t > 1e-12)
        inside[p] = (hit.sum() % 2) == 1
    return inside
