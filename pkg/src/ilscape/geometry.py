"""Mesh ingestion, surface sampling, local feature size, and closest-point queries."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from ilscape.bvh import TriangleBVH

log = logging.getLogger(__name__)


class MeshError(ValueError):
    """Raised for unreadable or unusable mesh input."""


class GeometryWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Static triangle mesh (soups allowed) with area-weighted vertex normals."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(t) == 0:
            raise MeshError("zero triangles")
        if not np.isfinite(v).all():
            raise MeshError("NaN or infinite vertex coordinates")
        if t.min() < 0 or t.max() >= len(v):
            raise MeshError(f"triangle index out of range for {len(v)} vertices")
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @cached_property
    def face_normals_weighted(self) -> np.ndarray:
        """Unnormalized face normals; length is twice the triangle area."""
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return np.cross(b - a, c - a)

    @cached_property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals_weighted, axis=1)

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        acc = np.zeros_like(self.vertices)
        fn = self.face_normals_weighted
        for i in range(3):
            np.add.at(acc, self.triangles[:, i], fn)
        norm = np.linalg.norm(acc, axis=1)
        out = np.tile([0.0, 0.0, 1.0], (len(acc), 1))
        ok = norm > 0
        out[ok] = acc[ok] / norm[ok, None]
        out.flags.writeable = False
        return out

    @property
    def bounds(self) -> np.ndarray:
        """``[[xmin, ymin, zmin], [xmax, ymax, zmax]]``."""
        return np.array([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    @property
    def diagonal(self) -> float:
        lo, hi = self.bounds
        return float(np.linalg.norm(hi - lo))

    @cached_property
    def bvh(self) -> TriangleBVH:
        return TriangleBVH(self.vertices, self.triangles)

    def transformed(self, rotation=None, translation=None, scale=1.0) -> "Mesh":
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=float)
        return Mesh(v, self.triangles)


def load_mesh(path) -> Mesh:
    """Read an OBJ file. ``vn``/``vt`` records are ignored; polygons are fan-triangulated."""
    path = Path(path)
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc
    verts: list[list[float]] = []
    tris: list[tuple[int, int, int]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            try:
                xyz = [float(x) for x in parts[1:4]]
            except ValueError:
                raise MeshError(f"{path}:{lineno}: bad vertex record") from None
            if len(xyz) != 3:
                raise MeshError(f"{path}:{lineno}: vertex needs 3 coordinates")
            verts.append(xyz)
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                try:
                    k = int(tok.split("/")[0])
                except ValueError:
                    raise MeshError(f"{path}:{lineno}: bad face record") from None
                idx.append(k - 1 if k > 0 else len(verts) + k)
            for i in range(1, len(idx) - 1):
                tris.append((idx[0], idx[i], idx[i + 1]))
    if not tris:
        raise MeshError(f"zero triangles in {path}")
    v = np.array(verts, dtype=float).reshape(-1, 3)
    if not np.isfinite(v).all():
        raise MeshError(f"NaN coordinates in {path}")
    return Mesh(v, np.array(tris, dtype=np.int64))


def save_obj(mesh: Mesh, path, colors=None) -> None:
    """Write an OBJ; optional per-vertex RGB in [0, 1] is appended to ``v`` lines."""
    lines = []
    for i, (x, y, z) in enumerate(mesh.vertices):
        if colors is None:
            lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
        else:
            r, g, b = colors[i]
            lines.append(f"v {x:.9g} {y:.9g} {z:.9g} {r:.6f} {g:.6f} {b:.6f}")
    for a, b, c in mesh.triangles + 1:
        lines.append(f"f {a} {b} {c}")
    Path(path).write_text("\n".join(lines) + "\n")


# --- surface sampling -------------------------------------------------------


def sample_triangle_point(ta, tb, tc, r1, r2):
    """Map ``r1, r2`` in [0, 1] to a point of triangle ``(ta, tb, tc)``.

    Works on scalars or on broadcastable arrays (one row per triangle).
    """
    ta, tb, tc = (np.asarray(x, dtype=float) for x in (ta, tb, tc))
    s = np.sqrt(np.asarray(r1, dtype=float))[..., None]
    r2 = np.asarray(r2, dtype=float)[..., None]
    return (1 - s) * ta + s * (1 - r2) * tb + s * r2 * tc


@dataclass(frozen=True, eq=False)
class SurfaceSampleSet:
    points: np.ndarray
    min_spacing: float
    triangle_index: np.ndarray

    def __len__(self):
        return len(self.points)

    def to_csv(self, path) -> None:
        write_point_csv(path, self.points, self.triangle_index)


def write_point_csv(path, points, tri_index) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "x", "y", "z", "tri_index"])
        for i, (p, t) in enumerate(zip(points, tri_index)):
            w.writerow([i, f"{p[0]:.12g}", f"{p[1]:.12g}", f"{p[2]:.12g}", int(t)])


def poisson_disk_sample(
    mesh: Mesh,
    min_spacing: float,
    rng_seed: int = 0,
    max_rejections: int = 500,
    max_samples: int = 200_000,
    batch: int = 4096,
) -> SurfaceSampleSet:
    """Dart throwing on the surface: accept a candidate only if it is farther
    than ``min_spacing`` from every accepted sample.

    Triangles are drawn with probability proportional to area. Stops after
    ``max_rejections`` consecutive rejections or ``max_samples`` accepts.
    """
    c = float(min_spacing)
    if not c > 0:
        raise ValueError("min_spacing must be positive")
    rng = np.random.default_rng(rng_seed)
    cum = np.cumsum(mesh.face_areas)
    if cum[-1] <= 0:
        raise MeshError("mesh has zero surface area")
    single = c > mesh.diagonal
    if single:
        warnings.warn(
            f"sample spacing {c} exceeds mesh diagonal {mesh.diagonal:.6g}; returning one sample",
            GeometryWarning,
            stacklevel=2,
        )

    tri = mesh.triangles
    verts = mesh.vertices
    cell = c / math.sqrt(3.0)  # at most one sample per hash cell
    reach = 2
    grid: dict[tuple[int, int, int], int] = {}
    pts: list[np.ndarray] = []
    owners: list[int] = []
    c2 = c * c
    rejections = 0
    offsets = [
        (i, j, k)
        for i in range(-reach, reach + 1)
        for j in range(-reach, reach + 1)
        for k in range(-reach, reach + 1)
    ]
    while True:
        t_idx = np.searchsorted(cum, rng.random(batch) * cum[-1], side="right")
        t_idx = np.minimum(t_idx, len(tri) - 1)
        r = rng.random((batch, 2))
        cand = sample_triangle_point(
            verts[tri[t_idx, 0]], verts[tri[t_idx, 1]], verts[tri[t_idx, 2]], r[:, 0], r[:, 1]
        )
        keys = np.floor(cand / cell).astype(np.int64)
        for n in range(batch):
            p = cand[n]
            kx, ky, kz = int(keys[n, 0]), int(keys[n, 1]), int(keys[n, 2])
            ok = True
            for dx, dy, dz in offsets:
                j = grid.get((kx + dx, ky + dy, kz + dz))
                if j is not None:
                    q = pts[j]
                    d0, d1, d2 = p[0] - q[0], p[1] - q[1], p[2] - q[2]
                    if d0 * d0 + d1 * d1 + d2 * d2 <= c2:
                        ok = False
                        break
            if ok:
                grid[(kx, ky, kz)] = len(pts)
                pts.append(p)
                owners.append(int(t_idx[n]))
                rejections = 0
                if single or len(pts) >= max_samples:
                    return _sample_set(pts, c, owners)
            else:
                rejections += 1
                if rejections >= max_rejections:
                    return _sample_set(pts, c, owners)


def _sample_set(pts, c, owners):
    return SurfaceSampleSet(np.array(pts).reshape(-1, 3), c, np.array(owners, dtype=np.int64))


# --- local feature size -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class LfsField:
    lfs: np.ndarray
    fallback: bool = False

    @property
    def density(self) -> np.ndarray:
        return 1.0 / self.lfs**2


def _is_flat(vertices: np.ndarray, diag: float) -> bool:
    if len(vertices) < 4 or diag <= 0:
        return True
    s = np.linalg.svd(vertices - vertices.mean(axis=0), compute_uv=False)
    return s[-1] <= 1e-9 * max(s[0], 1e-300)


def estimate_lfs(
    mesh: Mesh,
    lfs_min: float | None = None,
    edge_threshold: float | None = None,
    tol: float | None = None,
    max_iter: int = 64,
    min_separation: float = np.pi / 8,
) -> LfsField:
    """Per-vertex local feature size by shrinking balls.

    For every vertex a ball tangent at the vertex is shrunk, once along the
    inward and once along the outward normal, until no other vertex lies
    inside it; its radius approximates the distance to the medial axis. The
    smaller of the two radii is kept. Neighbours closer than
    ``edge_threshold`` are ignored, and shrinking stops once the touching
    neighbour subtends less than ``min_separation`` radians at the ball
    centre (such neighbours reflect normal error, not a medial sheet).
    """
    diag = mesh.diagonal
    v = mesh.vertices
    if _is_flat(v, diag):
        log.warning("estimate_lfs: degenerate (flat) mesh, using uniform lfs = bbox diagonal")
        return LfsField(np.full(len(v), max(diag, 1e-12)), fallback=True)
    lfs_min = 1e-3 * diag if lfs_min is None else float(lfs_min)
    edge_threshold = 1e-6 * diag if edge_threshold is None else float(edge_threshold)
    tol = 1e-4 * diag if tol is None else float(tol)
    normals = mesh.vertex_normals
    tree = cKDTree(v)
    radii = [
        _shrink(v, normals, tree, 0.5 * diag, sign, edge_threshold, tol, max_iter, min_separation)
        for sign in (1.0, -1.0)
    ]
    lfs = np.clip(np.minimum(*radii), lfs_min, diag)
    return LfsField(lfs)


def _shrink(points, normals, tree, r0, sign, thr, tol, max_iter, min_sep, k=8):
    n = len(points)
    k = min(k, n)
    r = np.full(n, r0)
    active = np.arange(n)
    for _ in range(max_iter):
        if len(active) == 0:
            break
        p = points[active]
        nrm = normals[active] * sign
        centre = p - nrm * r[active, None]
        dist, idx = tree.query(centre, k=k)
        dist = dist.reshape(len(active), k)
        idx = idx.reshape(len(active), k)
        sep = np.linalg.norm(points[idx] - p[:, None, :], axis=2)
        valid = sep > thr
        col = np.argmax(valid, axis=1)
        has = valid[np.arange(len(active)), col]
        row = np.arange(len(active))
        d_cq = dist[row, col]
        q = points[idx[row, col]]
        inside = has & (d_cq < r[active] - tol)
        pq = p - q
        denom = 2.0 * np.einsum("ij,ij->i", nrm, pq)
        with np.errstate(divide="ignore", invalid="ignore"):
            r_new = np.einsum("ij,ij->i", pq, pq) / denom
        shrinks = inside & (denom > 0) & (r_new < r[active] - tol)
        # separation angle of p and q seen from the shrunken centre
        cos_sep = np.ones(len(active))
        rs = r_new[shrinks]
        cen = p[shrinks] - nrm[shrinks] * rs[:, None]
        cos_sep[shrinks] = np.einsum("ij,ij->i", p[shrinks] - cen, q[shrinks] - cen) / rs**2
        shrinks &= cos_sep < np.cos(min_sep)
        r[active[shrinks]] = r_new[shrinks]
        active = active[shrinks]
    return r


# --- motion-driver sampling -------------------------------------------------


@dataclass(frozen=True, eq=False)
class DriverParticleSet:
    """Motion particles on a driver surface at its reference pose.

    ``anchor_tri``/``anchor_bary`` locate each particle on the *original*
    driver mesh so it can be replayed on deformed copies of that mesh.
    """

    points: np.ndarray
    vertex_ids: np.ndarray
    anchor_tri: np.ndarray
    anchor_bary: np.ndarray

    def __len__(self):
        return len(self.points)

    def replay(self, mesh: Mesh, deformed_vertices) -> np.ndarray:
        dv = np.asarray(deformed_vertices, dtype=float)
        corners = dv[mesh.triangles[self.anchor_tri]]
        return np.einsum("nk,nkj->nj", self.anchor_bary, corners)

    def to_csv(self, path) -> None:
        write_point_csv(path, self.points, self.anchor_tri)


def bilateral_distance(d, lfs_p):
    """Saliency-scaled distance from an existing sample ``p``: ``d / lfs(p)**2``."""
    return np.asarray(d) * (1.0 / np.asarray(lfs_p, dtype=float) ** 2)


def _vertex_anchors(mesh: Mesh):
    nv = len(mesh.vertices)
    tri = np.full(nv, -1, dtype=np.int64)
    bary = np.zeros((nv, 3))
    # first incident triangle (lowest face id) wins
    vid, first = np.unique(mesh.triangles.ravel(), return_index=True)
    tri[vid] = first // 3
    bary[vid, first % 3] = 1.0
    return tri, bary


def midpoint_subdivide(mesh: Mesh, tri_of_face=None, face_bary=None):
    """One 4-to-1 midpoint subdivision with shared edge midpoints.

    Tracks, per output face, the original face it lies in and the barycentric
    coordinates of its corners in that face.
    """
    t = mesh.triangles
    nv = len(mesh.vertices)
    if tri_of_face is None:
        tri_of_face = np.arange(len(t))
        face_bary = np.broadcast_to(np.eye(3), (len(t), 3, 3)).copy()
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    key = np.sort(edges, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    nf = len(t)
    m01, m12, m20 = (nv + inv[i * nf:(i + 1) * nf] for i in range(3))
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    faces = np.concatenate(
        [
            np.column_stack([a, m01, m20]),
            np.column_stack([m01, b, m12]),
            np.column_stack([m20, m12, c]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    ba, bb, bc = face_bary[:, 0], face_bary[:, 1], face_bary[:, 2]
    b01, b12, b20 = 0.5 * (ba + bb), 0.5 * (bb + bc), 0.5 * (bc + ba)
    new_bary = np.concatenate(
        [
            np.stack([ba, b01, b20], axis=1),
            np.stack([b01, bb, b12], axis=1),
            np.stack([b20, b12, bc], axis=1),
            np.stack([b01, b12, b20], axis=1),
        ]
    )
    new_tri_of_face = np.tile(tri_of_face, 4)
    return Mesh(np.vstack([mesh.vertices, mids]), faces), new_tri_of_face, new_bary


def bilateral_fps(
    driver_mesh: Mesh,
    count: int,
    rng_seed: int = 0,
    lfs: LfsField | None = None,
    seed_vertex: int | None = None,
    min_vertices: int = 200,
    bilateral: bool = True,
) -> DriverParticleSet:
    """Greedy farthest-point sampling of driver vertices under the
    saliency-scaled distance ``d(s, p) / lfs(p)**2``.

    Each step adds the vertex ``s`` maximising ``min_p d(s, p) * rho(p)`` over
    the current set. Drivers with fewer than ``min_vertices`` vertices are
    first midpoint-subdivided. ``bilateral=False`` gives plain Euclidean FPS.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    base = driver_mesh
    cand = driver_mesh
    tri_of_face = face_bary = None
    while len(cand.vertices) < min_vertices:
        cand, tri_of_face, face_bary = midpoint_subdivide(cand, tri_of_face, face_bary)
    upsampled = cand is not base
    if upsampled or lfs is None:
        lfs = estimate_lfs(cand) if bilateral else LfsField(np.ones(len(cand.vertices)))
    rho = lfs.density if bilateral else np.ones(len(cand.vertices))

    v = cand.vertices
    n = len(v)
    if count > n:
        warnings.warn(f"requested {count} particles but driver has {n} vertices", GeometryWarning, stacklevel=2)
        count = n
    rng = np.random.default_rng(rng_seed)
    first = int(rng.integers(n)) if seed_vertex is None else int(seed_vertex)
    chosen = [first]
    mind = np.full(n, np.inf)
    cur = first
    for _ in range(count - 1):
        d = np.sqrt(((v - v[cur]) ** 2).sum(axis=1))
        np.minimum(mind, d * rho[cur], out=mind)
        mind[chosen] = -np.inf
        top = mind.max()
        ties = np.flatnonzero(mind == top)
        if len(ties) > 1:
            # order-independent tie-break on position
            ties = ties[np.lexsort(v[ties].T[::-1])]
        cur = int(ties[0])
        chosen.append(cur)
    ids = np.array(chosen, dtype=np.int64)

    if upsampled:
        vt, vb = _vertex_anchors(cand)
        anchor_tri = tri_of_face[vt[ids]]
        anchor_bary = np.einsum("nk,nkj->nj", vb[ids], face_bary[vt[ids]])
    else:
        vt, vb = _vertex_anchors(base)
        anchor_tri, anchor_bary = vt[ids], vb[ids]
    return DriverParticleSet(v[ids].copy(), ids, anchor_tri, anchor_bary)


def uniform_particle_subset(positions, count: int, rng_seed: int = 0) -> np.ndarray:
    """Random subset of simulation particles (for mesh-less drivers such as fluids)."""
    positions = np.asarray(positions, dtype=float)
    rng = np.random.default_rng(rng_seed)
    count = min(count, len(positions))
    return np.sort(rng.choice(len(positions), size=count, replace=False))


# --- closest point ----------------------------------------------------------


def closest_points(mesh: Mesh, queries):
    """Batched exact closest points. Returns ``(points, normals, distances, tri_index)``."""
    pts, tri, bary, dist = mesh.bvh.query(queries)
    corner_n = mesh.vertex_normals[mesh.triangles[tri]]
    nrm = np.einsum("nk,nkj->nj", bary, corner_n)
    ln = np.linalg.norm(nrm, axis=1)
    # opposite normals can cancel on soups; fall back to the face normal
    fn = mesh.face_normals_weighted[tri]
    fl = np.linalg.norm(fn, axis=1)
    bad = ln < 1e-12
    nrm[bad] = np.where(fl[bad, None] > 0, fn[bad] / np.maximum(fl[bad, None], 1e-300), [0.0, 0.0, 1.0])
    ln[bad] = 1.0
    return pts, nrm / ln[:, None], dist, tri


def closest_point(mesh: Mesh, q):
    """Closest surface point to ``q`` with its interpolated unit normal and distance."""
    pts, nrm, dist, _ = closest_points(mesh, np.asarray(q, dtype=float).reshape(1, 3))
    return pts[0], nrm[0], float(dist[0])
