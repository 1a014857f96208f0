"""Per-vertex saliency from the encoded flow attributes around a mesh."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ilscape.descriptor import AttributeWeights
from ilscape.flowfield import ATTRIBUTES, cell_index
from ilscape.geometry import GeometryWarning, Mesh, save_obj


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    values: np.ndarray  # (V,) in [0, 1]
    radius: float
    weights: AttributeWeights

    def __len__(self):
        return len(self.values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["vertex_id", "saliency"])
            for i, s in enumerate(self.values):
                w.writerow([i, f"{s:.9f}"])


def cell_scores(encoding, weights: AttributeWeights) -> np.ndarray:
    """Weighted sum of scaled attribute values at each occupied cell of an encoding."""
    scales = encoding.descriptor.scales
    w = weights.as_dict()
    score = np.zeros(len(encoding.occupied))
    for a in ATTRIBUTES:
        score += w[a] * np.clip(encoding.values[a] / scales[a], 0.0, 1.0)
    return score


def min_max(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if not hi > lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def saliency(scene, encoding, weights: AttributeWeights | None = None, radius: float = 0.0,
             mesh: Mesh | None = None) -> SaliencyMap:
    """Score each vertex by the attributes of the cell that holds it.

    With ``radius > 0`` the score is the mean over all cells of active sensors
    whose centres lie within ``radius`` of the holding cell's centre. Cells
    without samples count as zero. Scores are min-max normalized over the mesh.
    """
    weights = weights or AttributeWeights()
    mesh = scene.mesh if mesh is None else mesh
    if radius < 0:
        raise ValueError("radius must be >= 0")
    stack = encoding.stack
    n = stack.resolution
    n3 = n**3
    verts = mesh.vertices
    leaf = scene.tree.locate_many(verts)
    outside = leaf < 0
    if outside.any():
        warnings.warn(f"{int(outside.sum())} vertices lie outside the interaction space; saliency 0",
                      GeometryWarning, stacklevel=2)

    dense = np.zeros(len(stack) * n3)
    dense[encoding.occupied] = cell_scores(encoding, weights)

    slot = np.full(len(verts), -1, dtype=np.int64)
    inside = np.flatnonzero(~outside)
    pos = np.searchsorted(stack.sensor_ids, leaf[inside])
    pos = np.minimum(pos, max(len(stack) - 1, 0))
    found = stack.sensor_ids[pos] == leaf[inside]
    slot[inside[found]] = pos[found]

    # holding cell of every inside vertex, active sensor or not
    origins = scene.tree.leaf_origin[leaf[inside]]
    sizes = scene.tree.leaf_size[leaf[inside]]
    ijk = cell_index(verts[inside], origins, sizes, n)
    centre = origins + sizes[:, None] * (ijk + 0.5) / n
    flat = (ijk[:, 0] * n + ijk[:, 1]) * n + ijk[:, 2]

    raw = np.zeros(len(verts))
    own = np.where(slot[inside] >= 0, dense[np.maximum(slot[inside], 0) * n3 + flat], 0.0)
    if radius == 0:
        raw[inside] = own
    else:
        frac = (np.arange(n) + 0.5) / n
        grid = np.stack(np.meshgrid(frac, frac, frac, indexing="ij"), -1).reshape(-1, 3)
        centres = (stack.origins[:, None, :] + stack.sizes[:, None, None] * grid[None]).reshape(-1, 3)
        tree = cKDTree(centres)
        # a little slack so the holding cell itself is never lost to rounding
        hits = tree.query_ball_point(centre, radius * (1 + 1e-12) + 1e-12)
        for row, (v, idx) in enumerate(zip(inside, hits)):
            vals = dense[idx]
            total, count = float(vals.sum()), len(idx)
            if slot[v] < 0:
                count += 1  # holding cell of an inactive sensor: a zero not in the tree
            raw[v] = total / count if count else own[row]
    out = min_max(raw)
    out[outside] = 0.0
    return SaliencyMap(out, float(radius), weights)


def saliency_colors(values: np.ndarray) -> np.ndarray:
    """Blue (0) to red (1) vertex colours."""
    s = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)[:, None]
    return (1 - s) * np.array([0.1, 0.2, 0.9]) + s * np.array([0.9, 0.1, 0.1])


def export_obj(mesh: Mesh, smap: SaliencyMap, path) -> None:
    save_obj(mesh, path, colors=saliency_colors(smap.values))
