"""Procedural test shapes: spheres, capsules, cups and friends."""

from __future__ import annotations

import numpy as np

from ilscape.geometry import Mesh


def box(size=1.0, origin=(0.0, 0.0, 0.0)) -> Mesh:
    """Closed axis-aligned box with shared corners (8 vertices, 12 triangles)."""
    s = np.broadcast_to(np.asarray(size, dtype=float), (3,))
    corners = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=float)
    v = corners * s + np.asarray(origin, dtype=float)
    f = np.array(
        [
            [0, 2, 1], [1, 2, 3],  # z-
            [4, 5, 6], [5, 7, 6],  # z+
            [0, 1, 4], [1, 5, 4],  # y-
            [2, 6, 3], [3, 6, 7],  # y+
            [0, 4, 2], [2, 4, 6],  # x-
            [1, 3, 5], [3, 7, 5],  # x+
        ]
    )
    return Mesh(v, f)


def plane(nx=10, ny=10, size=(1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> Mesh:
    """Regular grid in the z = origin[2] plane, normals +z."""
    xs = np.linspace(0, size[0], nx + 1) + origin[0]
    ys = np.linspace(0, size[1], ny + 1) + origin[1]
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    v = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(origin[2]))])
    idx = np.arange(v.shape[0]).reshape(nx + 1, ny + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    f = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return Mesh(v, f)


def icosphere(subdivisions=3, radius=1.0, center=(0.0, 0.0, 0.0)) -> Mesh:
    t = (1.0 + 5**0.5) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.reshape(3, -1)
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        m01, m12, m20 = (len(v) + inv[i] for i in range(3))
        v = np.vstack([v, mid])
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        f = np.concatenate(
            [
                np.column_stack([a, m01, m20]),
                np.column_stack([m01, b, m12]),
                np.column_stack([m20, m12, c]),
                np.column_stack([m01, m12, m20]),
            ]
        )
    return Mesh(v * radius + np.asarray(center, dtype=float), f)


def _surface_of_revolution(profile, segments, cap_start=False, cap_end=False, axis=2):
    """Revolve ``profile`` rows ``(radius, height)`` around ``axis``.

    Consecutive profile rows are joined by quad strips; optional fan caps close
    the first/last ring at its height.
    """
    profile = np.asarray(profile, dtype=float)
    ang = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    rings = []
    for r, h in profile:
        rings.append(np.column_stack([r * np.cos(ang), r * np.sin(ang), np.full(segments, h)]))
    v = np.vstack(rings)
    faces = []
    for i in range(len(profile) - 1):
        a = i * segments + np.arange(segments)
        b = i * segments + (np.arange(segments) + 1) % segments
        c = b + segments
        d = a + segments
        faces.append(np.column_stack([a, b, c]))
        faces.append(np.column_stack([a, c, d]))
    verts = [v]
    n = len(v)
    for flag, ring, flip in ((cap_start, 0, True), (cap_end, len(profile) - 1, False)):
        if not flag:
            continue
        centre = np.array([[0.0, 0.0, profile[ring, 1]]])
        verts.append(centre)
        a = ring * segments + np.arange(segments)
        b = ring * segments + (np.arange(segments) + 1) % segments
        cidx = np.full(segments, n)
        faces.append(np.column_stack([cidx, b, a]) if flip else np.column_stack([cidx, a, b]))
        n += 1
    v = np.vstack(verts)
    if axis != 2:
        perm = {0: [2, 0, 1], 1: [1, 2, 0]}[axis]
        v = v[:, perm]
    return v, np.concatenate(faces)


def capsule(radius=0.25, length=4.0, segments=32, cap_rings=8, body_rings=None) -> Mesh:
    """Capsule along z: cylinder of ``length`` with hemispherical caps, centred at the origin."""
    if body_rings is None:
        arc = np.pi * radius / 2 / cap_rings
        body_rings = max(2, int(np.ceil(length / arc)))
    half = length / 2
    lower = [(radius * np.sin(a), -half - radius * np.cos(a)) for a in np.linspace(0, np.pi / 2, cap_rings + 1)[1:]]
    body = [(radius, z) for z in np.linspace(-half, half, body_rings + 1)[1:-1]]
    upper = [(radius * np.sin(a), half + radius * np.cos(a)) for a in np.linspace(np.pi / 2, 0, cap_rings + 1)[:-1]]
    profile = lower + body + upper
    v, f = _surface_of_revolution(profile, segments)
    poles = np.array([[0, 0, -half - radius], [0, 0, half + radius]])
    n = len(v)
    last = len(profile) - 1
    a = np.arange(segments)
    b = (a + 1) % segments
    f = np.concatenate(
        [
            f,
            np.column_stack([np.full(segments, n), b, a]),
            np.column_stack([np.full(segments, n + 1), last * segments + a, last * segments + b]),
        ]
    )
    return Mesh(np.vstack([v, poles]), f)


def cylinder(radius=0.5, height=1.0, segments=32, rings=8, capped=True) -> Mesh:
    profile = [(radius, z) for z in np.linspace(0, height, rings + 1)]
    v, f = _surface_of_revolution(profile, segments, cap_start=capped, cap_end=capped)
    return Mesh(v, f)


def cup(radius=0.4, height=0.8, segments=32, rings=8, base_rings=3, flare=0.0) -> Mesh:
    """Open-top cup standing on z = 0: a flat base and a (optionally flared) wall."""
    base = [(radius * s, 0.0) for s in np.linspace(0, 1, base_rings + 1)[1:]]
    wall = [(radius * (1 + flare * z / height), z) for z in np.linspace(0, height, rings + 1)[1:]]
    v, f = _surface_of_revolution(base + wall, segments)
    centre = np.array([[0.0, 0.0, 0.0]])
    a = np.arange(segments)
    b = (a + 1) % segments
    fan = np.column_stack([np.full(segments, len(v)), b, a])
    return Mesh(np.vstack([v, centre]), np.concatenate([f, fan]))


def merge(*meshes: Mesh) -> Mesh:
    verts, faces, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.triangles + off)
        off += len(m.vertices)
    return Mesh(np.vstack(verts), np.concatenate(faces))


def dumbbell(ball_radius=1.0, handle_radius=0.15, handle_length=3.0, subdivisions=3, segments=16) -> Mesh:
    """Two spheres joined by a thin open cylinder along x (a triangle soup)."""
    gap = handle_length / 2 + ball_radius
    left = icosphere(subdivisions, ball_radius, (-gap, 0, 0))
    right = icosphere(subdivisions, ball_radius, (gap, 0, 0))
    inset = ball_radius - np.sqrt(ball_radius**2 - handle_radius**2)
    span = handle_length + 2 * inset
    arc = 2 * np.pi * handle_radius / segments
    rings = max(2, int(np.ceil(span / arc)))
    profile = [(handle_radius, x) for x in np.linspace(-span / 2, span / 2, rings + 1)]
    v, f = _surface_of_revolution(profile, segments, axis=0)
    return merge(left, right, Mesh(v, f))


PRIMITIVES = {
    "box": box,
    "plane": plane,
    "sphere": icosphere,
    "capsule": capsule,
    "cylinder": cylinder,
    "cup": cup,
    "dumbbell": dumbbell,
}
