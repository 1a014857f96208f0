"""Interaction space and the octree whose leaves are the sensor regions."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ilscape.geometry import Mesh, SurfaceSampleSet

AXES = {"x": 0, "y": 1, "z": 2}
AUTO_DOMAIN_FACTOR = 1.5
MAX_DEPTH_LIMIT = 12


class SensorGridError(ValueError):
    pass


@dataclass(frozen=True)
class InteractionSpace:
    """Axis-aligned cube ``[origin, origin + edge]^3`` around the observed mesh."""

    origin: tuple[float, float, float]
    edge: float
    padding_factor: float
    up_axis: str = "z"

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.origin) + 0.5 * self.edge

    @property
    def box(self) -> np.ndarray:
        lo = np.asarray(self.origin, dtype=float)
        return np.array([lo, lo + self.edge])

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(points)
        lo, hi = self.box
        return np.all((p >= lo) & (p <= hi), axis=1)


def build_space(mesh: Mesh, domain_size: float | str | None = "auto", up_axis: str = "z") -> InteractionSpace:
    """Cube centred on the mesh bounding box; ``auto`` edge is 1.5x the largest extent."""
    if up_axis not in AXES:
        raise SensorGridError(f"up_axis must be one of x/y/z, got {up_axis!r}")
    lo, hi = mesh.bounds
    extent = float((hi - lo).max())
    if domain_size in (None, "auto"):
        edge = AUTO_DOMAIN_FACTOR * extent
    else:
        edge = float(domain_size)
        if not edge >= extent:
            raise SensorGridError(
                f"domain_size {edge:g} is smaller than the mesh extent {extent:g}; the object must lie inside U"
            )
    if edge <= 0:
        raise SensorGridError("interaction space has zero size (degenerate mesh bounds)")
    centre = 0.5 * (lo + hi)
    origin = centre - 0.5 * edge
    return InteractionSpace(tuple(float(x) for x in origin), edge, edge / extent if extent > 0 else np.inf, up_axis)


@dataclass(frozen=True)
class Sensor:
    id: int
    center: np.ndarray
    size: float
    depth: int

    @property
    def origin(self) -> np.ndarray:
        return self.center - 0.5 * self.size

    @property
    def box(self) -> np.ndarray:
        return np.array([self.origin, self.origin + self.size])


class SensorTree:
    """Octree over the interaction space; leaves are sensors, ids in depth-first order.

    Positions are addressed on an integer lattice with ``2**max_depth`` cells per
    axis, so cell ownership is half-open ``[min, max)`` except on the upper
    faces of the space, which are closed.
    """

    def __init__(self, space: InteractionSpace, max_depth: int, children: np.ndarray, leaf_of_node: np.ndarray,
                 leaf_lattice: np.ndarray, leaf_depth: np.ndarray):
        self.space = space
        self.max_depth = int(max_depth)
        self.children = children  # (nodes, 8), -1 on leaves
        self.leaf_of_node = leaf_of_node  # (nodes,), -1 on inner nodes
        self.leaf_lattice = leaf_lattice  # (leaves, 3) integer min corner on the max-depth lattice
        self.leaf_depth = leaf_depth
        self.leaf_size = space.edge / (2.0 ** leaf_depth)
        scale = space.edge / float(1 << self.max_depth)
        self.leaf_origin = np.asarray(space.origin) + leaf_lattice * scale
        self.leaf_center = self.leaf_origin + 0.5 * self.leaf_size[:, None]

    def __len__(self):
        return len(self.leaf_depth)

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_depth)

    def sensor(self, i: int) -> Sensor:
        return Sensor(int(i), self.leaf_center[i].copy(), float(self.leaf_size[i]), int(self.leaf_depth[i]))

    def sensors(self):
        return [self.sensor(i) for i in range(self.n_leaves)]

    def lattice(self, points) -> tuple[np.ndarray, np.ndarray]:
        return _lattice(self.space, self.max_depth, points)

    def locate_many(self, points) -> np.ndarray:
        """Leaf id per point, -1 where the point is outside the space."""
        ijk, inside = self.lattice(points)
        node = np.zeros(len(ijk), dtype=np.int64)
        out = np.full(len(ijk), -1, dtype=np.int64)
        todo = np.flatnonzero(inside)
        for level in range(self.max_depth + 1):
            leaf = self.leaf_of_node[node[todo]]
            done = leaf >= 0
            out[todo[done]] = leaf[done]
            todo = todo[~done]
            if len(todo) == 0:
                break
            shift = self.max_depth - level - 1
            bits = (ijk[todo] >> shift) & 1
            octant = bits[:, 0] | (bits[:, 1] << 1) | (bits[:, 2] << 2)
            node[todo] = self.children[node[todo], octant]
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "depth", "cx", "cy", "cz", "size"])
            for i in range(self.n_leaves):
                c = self.leaf_center[i]
                w.writerow([i, int(self.leaf_depth[i]), f"{c[0]:.12g}", f"{c[1]:.12g}", f"{c[2]:.12g}",
                            f"{self.leaf_size[i]:.12g}"])


def _lattice(space: InteractionSpace, max_depth: int, points):
    """Integer coordinates on the ``2**max_depth`` lattice and an inside-U mask."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    n = 1 << max_depth
    rel = (p - np.asarray(space.origin)) / space.edge
    inside = np.all((rel >= 0.0) & (rel <= 1.0), axis=1)
    with np.errstate(invalid="ignore"):
        ijk = np.floor(np.where(inside[:, None], rel, 0.0) * n).astype(np.int64)
    np.clip(ijk, 0, n - 1, out=ijk)
    return ijk, inside


def locate(tree: SensorTree, q) -> int | None:
    """Id of the sensor containing ``q``, or ``None`` outside the space."""
    i = int(tree.locate_many(np.asarray(q, dtype=float).reshape(1, 3))[0])
    return None if i < 0 else i


def build_sensor_tree(space: InteractionSpace, samples, max_depth: int = 8) -> SensorTree:
    """Subdivide every cell holding more than one surface sample, down to ``max_depth``."""
    if not 1 <= int(max_depth) <= MAX_DEPTH_LIMIT:
        raise SensorGridError(f"max_depth must be in [1, {MAX_DEPTH_LIMIT}], got {max_depth}")
    max_depth = int(max_depth)
    pts = samples.points if isinstance(samples, SurfaceSampleSet) else np.asarray(samples, dtype=float)
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    ijk, inside = _lattice(space, max_depth, pts)
    if not inside.all():
        bad = np.flatnonzero(~inside)
        raise SensorGridError(
            f"{len(bad)} surface sample(s) outside the interaction space, first #{bad[0]} at {pts[bad[0]].tolist()}"
        )

    children: list[list[int]] = []
    leaf_of_node: list[int] = []
    leaf_lattice: list[tuple[int, int, int]] = []
    leaf_depth: list[int] = []

    def visit(idx: np.ndarray, corner: tuple[int, int, int], depth: int) -> int:
        node = len(children)
        children.append([-1] * 8)
        leaf_of_node.append(-1)
        if len(idx) <= 1 or depth >= max_depth:
            leaf_of_node[node] = len(leaf_depth)
            leaf_lattice.append(corner)
            leaf_depth.append(depth)
            return node
        shift = max_depth - depth - 1
        bits = (ijk[idx] >> shift) & 1
        octant = bits[:, 0] | (bits[:, 1] << 1) | (bits[:, 2] << 2)
        half = 1 << shift
        for o in range(8):
            sub = (corner[0] + (o & 1) * half, corner[1] + ((o >> 1) & 1) * half, corner[2] + ((o >> 2) & 1) * half)
            children[node][o] = visit(idx[octant == o], sub, depth + 1)
        return node

    visit(np.arange(len(pts)), (0, 0, 0), 0)
    return SensorTree(
        space,
        max_depth,
        np.array(children, dtype=np.int64),
        np.array(leaf_of_node, dtype=np.int64),
        np.array(leaf_lattice, dtype=np.int64).reshape(-1, 3),
        np.array(leaf_depth, dtype=np.int64),
    )
