import logging
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import pdist

from ilscape import shapes
from ilscape.geometry import (
    GeometryWarning,
    Mesh,
    MeshError,
    bilateral_distance,
    bilateral_fps,
    closest_point,
    closest_points,
    estimate_lfs,
    load_mesh,
    midpoint_subdivide,
    poisson_disk_sample,
    sample_triangle_point,
    uniform_particle_subset,
)

TRI = (np.array([0.0, 0, 0]), np.array([1.0, 0, 0]), np.array([0.0, 1, 0]))


def brute_closest(vertices, triangles, q):
    """Closest point over every triangle: plane projection if inside, else the best edge point."""
    a, b, c = (vertices[triangles[:, i]] for i in range(3))
    best = np.full(len(q), np.inf)
    out = np.zeros_like(q)
    n = np.cross(b - a, c - a)
    nn = np.einsum("ij,ij->i", n, n)
    for i, p in enumerate(q):
        cands = []
        with np.errstate(divide="ignore", invalid="ignore"):
            proj = p - (np.einsum("ij,ij->i", p - a, n) / nn)[:, None] * n
            # barycentric of projection via sub-areas
            wa = np.einsum("ij,ij->i", np.cross(b - proj, c - proj), n) / nn
            wb = np.einsum("ij,ij->i", np.cross(c - proj, a - proj), n) / nn
            wc = 1 - wa - wb
        inside = (wa >= 0) & (wb >= 0) & (wc >= 0) & (nn > 0)
        cands.append(proj[inside])
        for u, v in ((a, b), (b, c), (c, a)):
            d = v - u
            dd = np.einsum("ij,ij->i", d, d)
            t = np.clip(np.einsum("ij,ij->i", p - u, d) / np.where(dd > 0, dd, 1), 0, 1)
            cands.append(u + t[:, None] * d)
        allc = np.vstack(cands)
        d2 = ((allc - p) ** 2).sum(axis=1)
        k = np.argmin(d2)
        best[i], out[i] = d2[k], allc[k]
    return out, np.sqrt(best)


def write(path, text):
    path.write_text(text)
    return path


# --- load_mesh ---------------------------------------------------------------

def test_load_unit_cube(tmp_path):
    from ilscape.geometry import save_obj

    p = tmp_path / "cube.obj"
    save_obj(shapes.box(), p)
    m = load_mesh(p)
    assert len(m.vertices) == 8 and len(m.triangles) == 12
    np.testing.assert_allclose(m.bounds, [[0, 0, 0], [1, 1, 1]])


def test_quad_is_fan_triangulated(tmp_path):
    p = write(tmp_path / "q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n")
    m = load_mesh(p)
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_negative_face_indices(tmp_path):
    p = write(tmp_path / "n.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    assert load_mesh(p).triangles.tolist() == [[0, 1, 2]]


def test_load_errors_are_distinct(tmp_path):
    with pytest.raises(MeshError, match="cannot read"):
        load_mesh(tmp_path / "missing.obj")
    with pytest.raises(MeshError, match="zero triangles"):
        load_mesh(write(tmp_path / "e.obj", ""))
    with pytest.raises(MeshError, match="NaN"):
        load_mesh(write(tmp_path / "nan.obj", "v nan 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
    with pytest.raises(MeshError, match="out of range"):
        load_mesh(write(tmp_path / "r.obj", "v 0 0 0\nv 1 0 0\nf 1 2 3\n"))


def test_vertex_normals_unit_and_outward():
    m = shapes.icosphere(2)
    n = m.vertex_normals
    np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-6)
    radial = m.vertices / np.linalg.norm(m.vertices, axis=1, keepdims=True)
    assert np.all(np.einsum("ij,ij->i", n, radial) > 0.99)


def test_soup_is_accepted():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5], [6, 5, 5], [5, 6, 5.0]])
    m = Mesh(v, [[0, 1, 2], [3, 4, 5], [0, 1, 2]])
    assert m.face_areas.sum() == pytest.approx(1.5)


# --- sample_triangle_point -----------------------------------------------------

@pytest.mark.parametrize("r1,r2,expect", [(0, 0.7, TRI[0]), (1, 0, TRI[1]), (1, 1, TRI[2])])
def test_sample_triangle_corners(r1, r2, expect):
    np.testing.assert_allclose(sample_triangle_point(*TRI, r1, r2), expect)


@given(st.floats(0, 1), st.floats(0, 1),
       st.lists(st.floats(-10, 10, allow_nan=False), min_size=9, max_size=9))
def test_sample_triangle_barycentric(r1, r2, coords):
    a, b, c = np.array(coords).reshape(3, 3)
    p = sample_triangle_point(a, b, c, r1, r2)
    s = np.sqrt(r1)
    w = np.array([1 - s, s * (1 - r2), s * r2])
    assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(p, w @ np.array([a, b, c]), atol=1e-9)


# --- poisson_disk_sample ---------------------------------------------------------

def test_poisson_spacing_and_on_triangle():
    m = shapes.box()
    s = poisson_disk_sample(m, 0.1, rng_seed=3)
    assert len(s) > 50
    assert pdist(s.points).min() > 0.1
    # every point lies on its source triangle
    a, b, c = (m.vertices[m.triangles[s.triangle_index, i]] for i in range(3))
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    assert np.abs(np.einsum("ij,ij->i", s.points - a, n)).max() < 1e-6


def test_poisson_single_sample_when_spacing_huge():
    with pytest.warns(GeometryWarning):
        s = poisson_disk_sample(shapes.box(), 10.0)
    assert len(s) == 1


def test_poisson_deterministic(tmp_path):
    m = shapes.cup()
    a, b = poisson_disk_sample(m, 0.05, rng_seed=9), poisson_disk_sample(m, 0.05, rng_seed=9)
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "id,x,y,z,tri_index"


def test_poisson_rejects_nonpositive_spacing():
    with pytest.raises(ValueError):
        poisson_disk_sample(shapes.box(), 0.0)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 0.4), st.integers(0, 1000))
def test_poisson_pairwise_property(c, seed):
    s = poisson_disk_sample(shapes.icosphere(1), c, rng_seed=seed)
    if len(s) > 1:
        assert pdist(s.points).min() > c


# --- estimate_lfs ----------------------------------------------------------------

def test_lfs_sphere():
    f = estimate_lfs(shapes.icosphere(3, radius=1.0))
    assert not f.fallback
    np.testing.assert_allclose(f.lfs, 1.0, rtol=0.10)


def test_lfs_capsule_body():
    r = 0.25
    m = shapes.capsule(radius=r, length=4.0)
    f = estimate_lfs(m)
    z = m.vertices[:, 2]
    body = np.abs(z - np.median(z)) < 1.0
    assert body.sum() > 20
    np.testing.assert_allclose(f.lfs[body], r, rtol=0.15)


def test_lfs_flat_fallback(caplog):
    m = shapes.plane()
    with caplog.at_level(logging.WARNING):
        f = estimate_lfs(m)
    assert f.fallback
    np.testing.assert_allclose(f.lfs, m.diagonal)
    assert "degenerate" in caplog.text


def test_lfs_positive_and_density_finite():
    f = estimate_lfs(shapes.dumbbell(subdivisions=2))
    assert np.all(f.lfs > 0) and np.all(np.isfinite(f.density))


# --- bilateral_fps ---------------------------------------------------------------

def test_bilateral_distance_substitution():
    assert bilateral_distance(2.0, 0.5) == pytest.approx(8.0)


def test_fps_count_one_is_seed():
    m = shapes.icosphere(2)
    d = bilateral_fps(m, 1, seed_vertex=17)
    assert d.vertex_ids.tolist() == [17]
    np.testing.assert_allclose(d.points[0], m.vertices[17])


def test_fps_count_and_unique_anchors():
    m = shapes.icosphere(2)
    d = bilateral_fps(m, 50, rng_seed=1)
    assert len(d) == 50
    assert len(np.unique(d.vertex_ids)) == 50


def test_fps_too_many_warns():
    m = shapes.icosphere(3)  # above the upsampling threshold
    with pytest.warns(GeometryWarning):
        d = bilateral_fps(m, 10_000)
    assert len(d) == len(m.vertices)


def test_fps_coarse_driver_upsampled_and_replayable():
    m = shapes.box()
    d = bilateral_fps(m, 20, rng_seed=0)
    assert len(d) == 20
    # anchors reproduce the reference positions and follow a rigid move
    np.testing.assert_allclose(d.replay(m, m.vertices), d.points, atol=1e-12)
    np.testing.assert_allclose(d.replay(m, m.vertices + [1, 2, 3]), d.points + [1, 2, 3], atol=1e-12)


def test_midpoint_subdivide_counts():
    m = shapes.box()
    s, tof, bary = midpoint_subdivide(m)
    assert len(s.triangles) == 4 * len(m.triangles)
    assert len(s.vertices) == 8 + 18
    np.testing.assert_allclose(bary.sum(axis=2), 1.0)


def test_fps_oversamples_thin_handle():
    m = shapes.dumbbell(subdivisions=3)
    n = 120

    def handle(pts):  # the handle runs along x between the balls
        return np.mean((np.abs(pts[:, 0]) < 1.5) & (np.linalg.norm(pts[:, 1:], axis=1) < 0.3))

    bil = bilateral_fps(m, n, seed_vertex=0)
    euc = bilateral_fps(m, n, seed_vertex=0, bilateral=False)
    assert handle(bil.points) > handle(euc.points)


def test_fps_permutation_stable():
    m = shapes.icosphere(2)
    lfs = estimate_lfs(m)
    rng = np.random.default_rng(0)
    perm = rng.permutation(len(m.vertices))
    inv = np.argsort(perm)
    m2 = Mesh(m.vertices[perm], inv[m.triangles])
    a = bilateral_fps(m, 40, seed_vertex=5, lfs=lfs)
    b = bilateral_fps(m2, 40, seed_vertex=int(inv[5]), lfs=type(lfs)(lfs.lfs[perm]))
    key = lambda p: p[np.lexsort(p.T[::-1])]  # noqa: E731
    np.testing.assert_allclose(key(a.points), key(b.points), atol=1e-9)


def test_uniform_subset():
    idx = uniform_particle_subset(np.zeros((100, 3)), 10, rng_seed=2)
    assert len(np.unique(idx)) == 10 and idx.max() < 100
    assert len(uniform_particle_subset(np.zeros((5, 3)), 10)) == 5


# --- closest_point ---------------------------------------------------------------

def test_closest_point_over_plane():
    m = Mesh([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 3]])
    p, n, d = closest_point(m, [0.5, 0.5, 1.0])
    np.testing.assert_allclose(p, [0.5, 0.5, 0], atol=1e-12)
    np.testing.assert_allclose(n, [0, 0, 1], atol=1e-12)
    assert d == pytest.approx(1.0)
    assert closest_point(m, [0.3, 0.6, 0.0])[2] == pytest.approx(0.0, abs=1e-12)


def test_closest_point_matches_brute_force():
    m = shapes.cup()
    rng = np.random.default_rng(11)
    q = rng.uniform(-0.7, 1.1, size=(10_000, 3))
    pts, nrm, dist, _ = closest_points(m, q)
    sub = slice(0, 400)  # the python oracle is slow; distances are checked on all below
    ref, ref_d = brute_closest(m.vertices, m.triangles, q[sub])
    np.testing.assert_allclose(pts[sub], ref, atol=1e-9)
    np.testing.assert_allclose(dist[sub], ref_d, atol=1e-9)
    np.testing.assert_allclose(np.linalg.norm(pts - q, axis=1), dist, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(nrm, axis=1), 1.0, atol=1e-9)


def test_closest_point_all_queries_against_vectorized_oracle():
    m = shapes.icosphere(1)
    rng = np.random.default_rng(5)
    q = rng.normal(size=(10_000, 3))
    _, _, dist, _ = closest_points(m, q)
    # brute force: minimum over every triangle with the scalar oracle on a subset
    _, ref_d = brute_closest(m.vertices, m.triangles, q[:1000])
    np.testing.assert_allclose(dist[:1000], ref_d, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=6, max_size=6))
def test_closest_distance_is_lipschitz(c):
    m = shapes.icosphere(1)
    a, b = np.array(c[:3]), np.array(c[3:])
    _, _, d, _ = closest_points(m, np.array([a, b]))
    assert abs(d[0] - d[1]) <= np.linalg.norm(a - b) + 1e-12


def test_transformed_mesh_keeps_triangles():
    m = shapes.box()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        t = m.transformed(np.eye(3), [1, 0, 0], 2.0)
    np.testing.assert_allclose(t.bounds, [[1, 0, 0], [3, 2, 2]])
