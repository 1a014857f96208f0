"""Exact closest-point queries against triangle soups.

A median-split AABB hierarchy is walked depth-first per query, nearer child
first, inside a compiled kernel.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

from ilscape.parallel import worker_count

LEAF_SIZE = 4
_PARALLEL_MIN = 1 << 14  # batches smaller than this run on the calling thread


def closest_on_triangles(p, a, b, c):
    """Closest points on triangles ``(a, b, c)`` to points ``p``, row-wise.

    Returns ``(points, bary)`` with barycentric weights for ``a``, ``b``, ``c``.
    Voronoi-region classification after Ericson, Real-Time Collision Detection.
    """
    p = np.asarray(p, dtype=float)
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    n = len(p)
    bary = np.empty((n, 3))
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        bary[:, 0] = 1.0 - v - w
        bary[:, 1] = v
        bary[:, 2] = w

        # lowest priority first; later assignments win
        e43 = d4 - d3
        e56 = d5 - d6
        m = (va <= 0) & (e43 >= 0) & (e56 >= 0)
        t = e43[m] / (e43[m] + e56[m])
        bary[m] = np.column_stack([np.zeros_like(t), 1 - t, t])

        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        t = d2[m] / (d2[m] - d6[m])
        bary[m] = np.column_stack([1 - t, np.zeros_like(t), t])

        m = (d6 >= 0) & (d5 <= d6)
        bary[m] = (0.0, 0.0, 1.0)

        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t = d1[m] / (d1[m] - d3[m])
        bary[m] = np.column_stack([1 - t, t, np.zeros_like(t)])

        m = (d3 >= 0) & (d4 <= d3)
        bary[m] = (0.0, 1.0, 0.0)

        m = (d1 <= 0) & (d2 <= 0)
        bary[m] = (1.0, 0.0, 0.0)

    bad = ~np.isfinite(bary).all(axis=1)
    if bad.any():
        bary[bad] = _degenerate_bary(p[bad], a[bad], b[bad], c[bad])
    points = bary[:, :1] * a + bary[:, 1:2] * b + bary[:, 2:] * c
    return points, bary


def _segment_param(p, a, b):
    ab = b - a
    ll = np.einsum("ij,ij->i", ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.einsum("ij,ij->i", p - a, ab) / ll
    t = np.where(ll > 0, np.clip(t, 0.0, 1.0), 0.0)
    return t


def _degenerate_bary(p, a, b, c):
    # zero-area triangle: best of its three edges
    best = np.full(len(p), np.inf)
    out = np.zeros((len(p), 3))
    for i, j in ((0, 1), (1, 2), (0, 2)):
        x, y = (a, b, c)[i], (a, b, c)[j]
        t = _segment_param(p, x, y)
        q = x + t[:, None] * (y - x)
        d = np.einsum("ij,ij->i", p - q, p - q)
        better = d < best
        best[better] = d[better]
        row = np.zeros((len(p), 3))
        row[:, i] = 1 - t
        row[:, j] = t
        out[better] = row[better]
    return out


class TriangleBVH:
    """Axis-aligned bounding-volume hierarchy over mesh triangles."""

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray):
        self.vertices = vertices
        self.triangles = triangles
        corners = vertices[triangles]  # (T, 3, 3)
        self._a = np.ascontiguousarray(corners[:, 0])
        self._b = np.ascontiguousarray(corners[:, 1])
        self._c = np.ascontiguousarray(corners[:, 2])
        tri_lo = corners.min(axis=1)
        tri_hi = corners.max(axis=1)
        centroids = corners.mean(axis=1)

        lo, hi, left, right, leaf_tris = [], [], [], [], []
        # iterative build; node ids assigned in creation order
        stack = [(np.arange(len(triangles)), None, 0)]
        while stack:
            idx, parent, side = stack.pop()
            node = len(lo)
            lo.append(tri_lo[idx].min(axis=0))
            hi.append(tri_hi[idx].max(axis=0))
            left.append(-1)
            right.append(-1)
            leaf_tris.append(None)
            if parent is not None:
                (left if side == 0 else right)[parent] = node
            if len(idx) <= LEAF_SIZE:
                slots = np.full(LEAF_SIZE, -1, dtype=np.int64)
                slots[: len(idx)] = idx
                leaf_tris[node] = slots
                continue
            cen = centroids[idx]
            axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
            half = len(idx) // 2
            order = np.argsort(cen[:, axis], kind="stable")
            stack.append((idx[order[half:]], node, 1))
            stack.append((idx[order[:half]], node, 0))

        self.lo = np.array(lo)
        self.hi = np.array(hi)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.is_leaf = self.left < 0
        self.leaf_slot = np.full(len(lo), -1, dtype=np.int64)
        leaves = np.flatnonzero(self.is_leaf)
        self.leaf_slot[leaves] = np.arange(len(leaves))
        self.leaf_tris = np.array([leaf_tris[i] for i in leaves], dtype=np.int64).reshape(-1, LEAF_SIZE)

    def query(self, points):
        """Exact closest point for each row of ``points``.

        Returns ``(closest, triangle_index, barycentric, distance)``. Equidistant
        triangles resolve to the smallest triangle index.
        """
        points = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
        n = len(points)
        tri = np.zeros(n, dtype=np.int64)
        d2 = np.zeros(n)
        bary = np.zeros((n, 3))
        args = (self.lo, self.hi, self.left, self.right, self.leaf_slot, self.leaf_tris, self._a, self._b, self._c)
        workers = min(worker_count(), max(1, n // _PARALLEL_MIN))
        if workers > 1:
            # queries are independent, so the split does not change any result
            edges = np.linspace(0, n, workers + 1).astype(np.int64)
            parts = [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]
            with ThreadPoolExecutor(workers) as pool:
                list(pool.map(lambda s: _query_kernel(points[s], *args, tri[s], d2[s], bary[s]), parts))
        elif n:
            _query_kernel(points, *args, tri, d2, bary)
        closest = bary[:, :1] * self._a[tri] + bary[:, 1:2] * self._b[tri] + bary[:, 2:] * self._c[tri]
        return closest, tri, bary, np.sqrt(d2)


@njit(cache=True)
def _segment_d2(p, x, y):
    ab0, ab1, ab2 = y[0] - x[0], y[1] - x[1], y[2] - x[2]
    ll = ab0 * ab0 + ab1 * ab1 + ab2 * ab2
    t = 0.0
    if ll > 0:
        t = ((p[0] - x[0]) * ab0 + (p[1] - x[1]) * ab1 + (p[2] - x[2]) * ab2) / ll
        t = min(max(t, 0.0), 1.0)
    d0 = p[0] - x[0] - t * ab0
    d1 = p[1] - x[1] - t * ab1
    d2 = p[2] - x[2] - t * ab2
    return d0 * d0 + d1 * d1 + d2 * d2, t


@njit(cache=True)
def _point_triangle(p, a, b, c):
    """Squared distance and barycentric weights of the closest point (scalar Ericson)."""
    ab0, ab1, ab2 = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    ac0, ac1, ac2 = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    ap0, ap1, ap2 = p[0] - a[0], p[1] - a[1], p[2] - a[2]
    bp0, bp1, bp2 = p[0] - b[0], p[1] - b[1], p[2] - b[2]
    cp0, cp1, cp2 = p[0] - c[0], p[1] - c[1], p[2] - c[2]
    d1 = ab0 * ap0 + ab1 * ap1 + ab2 * ap2
    d2 = ac0 * ap0 + ac1 * ap1 + ac2 * ap2
    d3 = ab0 * bp0 + ab1 * bp1 + ab2 * bp2
    d4 = ac0 * bp0 + ac1 * bp1 + ac2 * bp2
    d5 = ab0 * cp0 + ab1 * cp1 + ab2 * cp2
    d6 = ac0 * cp0 + ac1 * cp1 + ac2 * cp2
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    e43 = d4 - d3
    e56 = d5 - d6
    denom = va + vb + vc
    if d1 <= 0 and d2 <= 0:
        u, v, w = 1.0, 0.0, 0.0
    elif d3 >= 0 and d4 <= d3:
        u, v, w = 0.0, 1.0, 0.0
    elif vc <= 0 and d1 >= 0 and d3 <= 0 and d1 - d3 != 0:
        t = d1 / (d1 - d3)
        u, v, w = 1.0 - t, t, 0.0
    elif d6 >= 0 and d5 <= d6:
        u, v, w = 0.0, 0.0, 1.0
    elif vb <= 0 and d2 >= 0 and d6 <= 0 and d2 - d6 != 0:
        t = d2 / (d2 - d6)
        u, v, w = 1.0 - t, 0.0, t
    elif va <= 0 and e43 >= 0 and e56 >= 0 and e43 + e56 != 0:
        t = e43 / (e43 + e56)
        u, v, w = 0.0, 1.0 - t, t
    elif denom != 0 and np.isfinite(denom):
        v = vb / denom
        w = vc / denom
        u = 1.0 - v - w
    else:
        # zero-area triangle: best of its three edges
        best, t = _segment_d2(p, a, b)
        u, v, w = 1.0 - t, t, 0.0
        e, t = _segment_d2(p, b, c)
        if e < best:
            best = e
            u, v, w = 0.0, 1.0 - t, t
        e, t = _segment_d2(p, a, c)
        if e < best:
            u, v, w = 1.0 - t, 0.0, t
    q0 = u * a[0] + v * b[0] + w * c[0] - p[0]
    q1 = u * a[1] + v * b[1] + w * c[1] - p[1]
    q2 = u * a[2] + v * b[2] + w * c[2] - p[2]
    return q0 * q0 + q1 * q1 + q2 * q2, u, v, w


@njit(cache=True)
def _box_d2(p, lo, hi):
    s = 0.0
    for k in range(3):
        g = max(lo[k] - p[k], p[k] - hi[k], 0.0)
        s += g * g
    return s


@njit(cache=True, nogil=True)
def _query_kernel(q, lo, hi, left, right, leaf_slot, leaf_tris, a, b, c, out_tri, out_d2, out_bary):
    stack = np.empty(256, dtype=np.int64)
    for i in range(q.shape[0]):
        p = q[i]
        best = np.inf
        best_tri = -1
        bu, bv, bw = 1.0, 0.0, 0.0
        sp = 0
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if _box_d2(p, lo[node], hi[node]) > best:
                continue
            if left[node] < 0:
                row = leaf_tris[leaf_slot[node]]
                for j in range(row.shape[0]):
                    t = row[j]
                    if t < 0:
                        continue
                    d2, u, v, w = _point_triangle(p, a[t], b[t], c[t])
                    if d2 < best or (d2 == best and t < best_tri):
                        best, best_tri, bu, bv, bw = d2, t, u, v, w
            else:
                l, r = left[node], right[node]
                dl = _box_d2(p, lo[l], hi[l])
                dr = _box_d2(p, lo[r], hi[r])
                # nearer child popped first
                if dl <= dr:
                    stack[sp] = r
                    stack[sp + 1] = l
                else:
                    stack[sp] = l
                    stack[sp + 1] = r
                sp += 2
        out_tri[i] = best_tri
        out_d2[i] = best
        out_bary[i, 0] = bu
        out_bary[i, 1] = bv
        out_bary[i, 2] = bw
