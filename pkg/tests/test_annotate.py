"""Muscle annotation (K-means + per-group PCA) and mesh ingestion."""
import warnings

import numpy as np
import pytest

from morphosim.design import (annotate_muscles, canonical_heading, ingest_mesh,
                              kmeans, load_obj)
from morphosim.errors import ConfigError, EmptyCluster, MeshError, OpenMesh

CUBE_VERTS = np.array([
    [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0],
])
CUBE_FACES = np.array([
    [0, 3, 2], [0, 2, 1],   # bottom
    [4, 5, 6], [4, 6, 7],   # top
    [0, 1, 5], [0, 5, 4],   # front
    [2, 3, 7], [2, 7, 6],   # back
    [0, 4, 7], [0, 7, 3],   # left
    [1, 2, 6], [1, 6, 5],   # right
])


def rod_cloud(axis, n=80, noise=0.01, seed=3):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    rng = np.random.default_rng(seed)
    t = np.linspace(-1.0, 1.0, n)
    return t[:, None] * axis + noise * rng.normal(size=(n, axis.size)), axis


def test_single_muscle_recovers_rod_axis():
    pts, axis = rod_cloud([2.0, 1.0, 0.5])
    r, f = annotate_muscles(pts, k=1, seed=0)
    assert r.shape == (80, 1) and (r == 1.0).all()
    # every member shares the cluster axis, within 1 degree of the rod
    assert np.ptp(f, axis=0).max() == 0.0
    cosang = abs(float(f[0] @ axis)) / np.linalg.norm(f[0])
    assert cosang >= np.cos(np.deg2rad(1.0))


def test_fiber_sign_follows_heading():
    pts, axis = rod_cloud([1.0, 0.2, -0.4], seed=5)
    _, f_fwd = annotate_muscles(pts, k=1, heading=axis, seed=0)
    _, f_rev = annotate_muscles(pts, k=1, heading=-axis, seed=0)
    assert float(f_fwd[0] @ axis) > 0
    assert float(f_rev[0] @ axis) < 0
    assert np.allclose(f_fwd, -f_rev)


def test_every_point_its_own_muscle_falls_back_to_heading():
    rng = np.random.default_rng(8)
    pts = rng.uniform(size=(6, 3))
    r, f = annotate_muscles(pts, k=6, seed=1)
    assert r.shape == (6, 6)
    assert np.array_equal(r.sum(axis=0), np.ones(6))   # one point per muscle
    assert np.array_equal(r.sum(axis=1), np.ones(6))
    assert np.array_equal(f, np.tile(canonical_heading(3), (6, 1)))


def test_two_blob_partition_and_2d_support():
    rng = np.random.default_rng(12)
    left = rng.normal(loc=(-3.0, 0.0), scale=0.2, size=(20, 2))
    right = rng.normal(loc=(3.0, 0.0), scale=0.2, size=(25, 2))
    pts = np.vstack([left, right])
    r, f = annotate_muscles(pts, k=2, seed=4)
    labels = r.argmax(axis=1)
    assert np.ptp(labels[:20]) == 0 and np.ptp(labels[20:]) == 0
    assert labels[0] != labels[-1]
    assert f.shape == (45, 2)
    assert np.allclose(np.linalg.norm(f, axis=1), 1.0)


def test_annotation_is_seed_deterministic():
    rng = np.random.default_rng(21)
    pts = rng.uniform(size=(30, 3))
    r1, f1 = annotate_muscles(pts, k=3, seed=7)
    r2, f2 = annotate_muscles(pts, k=3, seed=7)
    assert np.array_equal(r1, r2) and np.array_equal(f1, f2)


def test_kmeans_config_errors():
    pts = np.zeros((3, 2)) + np.arange(3)[:, None]
    with pytest.raises(ConfigError):
        kmeans(pts, k=0)
    with pytest.raises(ConfigError):
        kmeans(pts, k=4)


def test_duplicate_points_exhaust_reseeding():
    pts = np.ones((5, 3)) * 0.3
    with pytest.raises(EmptyCluster):
        kmeans(pts, k=2, seed=0)


def test_load_obj_text_with_quads_and_slash_tokens():
    text = """
# a unit square, fan-split
v 0 0 0
v 1 0 0
v 1 1 0
vn 0 0 1
vt 0 0
v 0 1 0
f 1/1/1 2/2/1 3/3/1 4/4/1
"""
    verts, faces = load_obj(text)
    assert verts.shape == (4, 3)
    assert np.array_equal(faces, [[0, 1, 2], [0, 2, 3]])


def test_load_obj_negative_indices():
    text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n"
    _, faces = load_obj(text)
    assert np.array_equal(faces, [[0, 1, 2], [0, 2, 3]])


def test_load_obj_from_path(tmp_path):
    path = tmp_path / "tri.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    verts, faces = load_obj(path)
    assert verts.shape == (3, 3) and np.array_equal(faces, [[0, 1, 2]])


@pytest.mark.parametrize("bad", [
    "v 0 0\nf 1 2 3\n",                       # short vertex
    "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n",     # short face
    "# only a comment\n",                     # no records
    "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n",   # dangling index
])
def test_load_obj_rejects_malformed(bad):
    with pytest.raises(MeshError):
        load_obj(bad)


def test_unit_cube_parity_oracle():
    rng = np.random.default_rng(33)
    pts = np.vstack([
        rng.uniform(-0.25, 1.25, size=(60, 3)),
        [[0.5, 0.5, 0.5], [0.99, 0.01, 0.5], [1.0001, 0.5, 0.5],
         [-5.0, 0.2, 0.3]],
    ])
    with warnings.catch_warnings():
        warnings.simplefilter("error", OpenMesh)   # cube is closed
        inside = ingest_mesh(CUBE_VERTS, CUBE_FACES, pts)
    want = ((pts > 0.0) & (pts < 1.0)).all(axis=1)
    assert np.array_equal(inside, want)


def test_ingest_translation_equivariance():
    rng = np.random.default_rng(34)
    pts = rng.uniform(-0.5, 1.5, size=(40, 3))
    shift = np.array([12.3, -4.5, 6.7])
    base = ingest_mesh(CUBE_VERTS, CUBE_FACES, pts)
    moved = ingest_mesh(CUBE_VERTS + shift, CUBE_FACES, pts + shift)
    assert np.array_equal(base, moved)


def test_open_mesh_warns():
    with pytest.warns(OpenMesh):
        inside = ingest_mesh(CUBE_VERTS, CUBE_FACES[:-1],
                             np.array([[0.5, 0.5, 0.5]]))
    assert inside.shape == (1,)


def test_ingest_rejects_planar_input():
    with pytest.raises(MeshError):
        ingest_mesh(CUBE_VERTS[:, :2], CUBE_FACES, np.zeros((1, 2)))
