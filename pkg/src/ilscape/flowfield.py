"""Per-sensor vector fields and their first-order flow attributes.

Fields are stored as stacks ``u[s, i, j, k, :]`` (sensor, x, y, z cell, vector
component) so that every sensor is processed by the same numpy call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_MODES = ("average", "direction")
RESOLUTIONS = (4, 8, 16)
TENSOR_ATTRIBUTES = ("Mt", "Md", "Ms", "Mw")
ATTRIBUTES = ("Mt", "Md", "Ms", "Mw", "M", "O")


class FlowFieldError(ValueError):
    pass


def _check(resolution, norm_mode):
    if resolution not in RESOLUTIONS:
        raise FlowFieldError(f"resolution must be one of {RESOLUTIONS}, got {resolution}")
    if norm_mode not in NORM_MODES:
        raise FlowFieldError(f"norm_mode must be one of {NORM_MODES}, got {norm_mode!r}")


def normalize_sums(sums: np.ndarray, counts: np.ndarray, norm_mode: str) -> np.ndarray:
    """Divide accumulated vectors by F: the sample count (average) or their norm (direction).

    Cells with F = 0 (empty, or opposing vectors cancelling in direction mode) get u = 0.
    """
    if norm_mode == "average":
        f = counts.astype(float)
    else:
        f = np.linalg.norm(sums, axis=-1)
    u = np.zeros_like(sums)
    ok = f > 0
    u[ok] = sums[ok] / f[ok][..., None]
    return u


@dataclass(frozen=True, eq=False)
class VectorField:
    """Regular ``n^3`` grid of cell vectors over one sensor box."""

    sensor_id: int
    origin: np.ndarray
    size: float
    u: np.ndarray  # (n, n, n, 3)
    count: np.ndarray  # (n, n, n)
    norm_mode: str = "average"

    @property
    def resolution(self) -> int:
        return self.u.shape[0]

    @property
    def spacing(self) -> float:
        return self.size / self.resolution

    @property
    def cell_centers(self) -> np.ndarray:
        return cell_centers(np.asarray(self.origin)[None], np.array([self.size]), self.resolution)[0]

    def to_csv(self, path) -> None:
        n = self.resolution
        lines = ["cell_i,cell_j,cell_k,ux,uy,uz,count"]
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    ux, uy, uz = self.u[i, j, k]
                    lines.append(f"{i},{j},{k},{ux:.12g},{uy:.12g},{uz:.12g},{int(self.count[i, j, k])}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class AttributeGrid:
    attribute: str
    values: np.ndarray  # (n, n, n)

    def to_csv(self, path) -> None:
        n = self.values.shape[0]
        lines = [f"cell_i,cell_j,cell_k,{self.attribute}"]
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    lines.append(f"{i},{j},{k},{self.values[i, j, k]:.12g}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def cell_centers(origins: np.ndarray, sizes: np.ndarray, n: int) -> np.ndarray:
    """Centres of every cell, shape ``(S, n, n, n, 3)``."""
    frac = (np.arange(n) + 0.5) / n
    gx, gy, gz = np.meshgrid(frac, frac, frac, indexing="ij")
    unit = np.stack([gx, gy, gz], axis=-1)
    return origins[:, None, None, None, :] + sizes[:, None, None, None, None] * unit


def cell_index(points: np.ndarray, origins: np.ndarray, sizes: np.ndarray, n: int) -> np.ndarray:
    """Integer cell coordinates of each point inside its own sensor box (clamped)."""
    ijk = np.floor((points - origins) / sizes[:, None] * n).astype(np.int64)
    return np.clip(ijk, 0, n - 1)


def bin_samples(sensor, positions, velocities, resolution: int = 8, norm_mode: str = "average") -> VectorField:
    """Accumulate trajectory samples lying in ``sensor`` into its cell grid."""
    _check(resolution, norm_mode)
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    vel = np.asarray(velocities, dtype=float).reshape(-1, 3)
    lo = np.asarray(sensor.origin, dtype=float)
    size = float(sensor.size)
    tol = 1e-12 * max(size, 1.0)
    outside = np.any((pos < lo - tol) | (pos > lo + size + tol), axis=1)
    if outside.any():
        i = int(np.flatnonzero(outside)[0])
        raise FlowFieldError(f"sample {i} at {pos[i].tolist()} lies outside sensor {sensor.id}")
    n = resolution
    ijk = cell_index(pos, lo[None], np.full(len(pos), size), n)
    flat = (ijk[:, 0] * n + ijk[:, 1]) * n + ijk[:, 2]
    sums, counts = accumulate(flat, vel, n**3)
    u = normalize_sums(sums, counts, norm_mode)
    return VectorField(int(sensor.id), lo, size, u.reshape(n, n, n, 3), counts.reshape(n, n, n), norm_mode)


def accumulate(keys: np.ndarray, vectors: np.ndarray, n_keys: int):
    """Per-key vector sums and counts, accumulated in input order."""
    counts = np.bincount(keys, minlength=n_keys)
    sums = np.column_stack([np.bincount(keys, weights=vectors[:, c], minlength=n_keys) for c in range(3)])
    return sums, counts


def interpolate(field: VectorField, q) -> np.ndarray:
    """Trilinear blend of cell-centre vectors; clamps to the boundary cells."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q = q.reshape(-1, 3)
    lo = np.asarray(field.origin, dtype=float)
    tol = 1e-12 * max(field.size, 1.0)
    if np.any((q < lo - tol) | (q > lo + field.size + tol)):
        raise FlowFieldError(f"query point outside sensor {field.sensor_id}")
    n = field.resolution
    g = (q - lo) / field.spacing - 0.5
    g = np.clip(g, 0.0, n - 1.0)
    i0 = np.minimum(np.floor(g).astype(np.int64), n - 2 if n > 1 else 0)
    f = g - i0
    out = np.zeros((len(q), 3))
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1 - f[:, 0]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1 - f[:, 1]
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1 - f[:, 2]
                out += (wx * wy * wz)[:, None] * field.u[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
    return out[0] if single else out


def gradient_stack(u: np.ndarray, spacing, occupied: np.ndarray | None = None) -> np.ndarray:
    """Velocity-gradient tensors ``T[..., a, b] = d u_a / d x_b`` for a field stack.

    ``u`` is ``(S, n, n, n, 3)``. Central differences where both neighbours
    along an axis are usable, one-sided where only one is, zero where neither
    is. A neighbour is unusable past the grid faces or, when ``occupied`` is
    given, if it received no sample.
    """
    s = u.shape[0]
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (s,))
    valid = np.ones(u.shape[:4], dtype=bool) if occupied is None else np.asarray(occupied, dtype=bool)
    t = np.zeros(u.shape + (3,))
    for b in range(3):
        ax = b + 1
        n = u.shape[ax]
        if n < 2:
            continue
        lo = [slice(None)] * 4
        hi = [slice(None)] * 4
        lo[ax] = slice(0, n - 1)
        hi[ax] = slice(1, n)
        lo, hi = tuple(lo), tuple(hi)
        step = u[hi] - u[lo]  # forward difference between cells i and i + 1
        ok = valid[hi] & valid[lo]
        fwd = np.zeros(u.shape)
        bwd = np.zeros(u.shape)
        has_f = np.zeros(valid.shape, dtype=bool)
        has_b = np.zeros(valid.shape, dtype=bool)
        fwd[lo] = step
        has_f[lo] = ok
        bwd[hi] = step
        has_b[hi] = ok
        both = has_f & has_b
        d = np.where(both[..., None], 0.5 * (fwd + bwd), np.where(has_f[..., None], fwd, 0.0))
        d = np.where((has_b & ~has_f)[..., None], bwd, d)
        t[..., b] = d
    return t / spacing[:, None, None, None, None, None]


def gradient_tensor(field: VectorField, index=None, occupied_only: bool = True) -> np.ndarray:
    """Gradient tensor of one field: at ``index=(i, j, k)`` or the full ``(n, n, n, 3, 3)`` grid.

    By default differences only span cells that received samples.
    """
    if field.resolution < 4:
        raise FlowFieldError("gradient needs resolution >= 4")
    t = gradient_stack(field.u[None], field.spacing, field.count[None] > 0 if occupied_only else None)[0]
    return t if index is None else t[tuple(index)]


def strain_components(t: np.ndarray):
    """Dilatation ``eps``, shear ``theta`` and vorticity ``omega`` vectors from gradient tensors."""
    eps = np.stack([t[..., 0, 0], t[..., 1, 1], t[..., 2, 2]], axis=-1)
    theta = np.stack([t[..., 2, 1] + t[..., 1, 2], t[..., 0, 2] + t[..., 2, 0], t[..., 1, 0] + t[..., 0, 1]], axis=-1)
    omega = 0.5 * np.stack(
        [t[..., 2, 1] - t[..., 1, 2], t[..., 0, 2] - t[..., 2, 0], t[..., 1, 0] - t[..., 0, 1]], axis=-1
    )
    return eps, theta, omega


def decompose(t: np.ndarray):
    """Rebuild the symmetric part S (from eps, theta) and antisymmetric part A (from omega)."""
    eps, th, om = strain_components(t)
    s = np.zeros(t.shape)
    s[..., 0, 0], s[..., 1, 1], s[..., 2, 2] = eps[..., 0], eps[..., 1], eps[..., 2]
    s[..., 0, 1] = s[..., 1, 0] = 0.5 * th[..., 2]
    s[..., 0, 2] = s[..., 2, 0] = 0.5 * th[..., 1]
    s[..., 1, 2] = s[..., 2, 1] = 0.5 * th[..., 0]
    a = np.zeros(t.shape)
    a[..., 0, 1], a[..., 1, 0] = -om[..., 2], om[..., 2]
    a[..., 0, 2], a[..., 2, 0] = om[..., 1], -om[..., 1]
    a[..., 1, 2], a[..., 2, 1] = -om[..., 0], om[..., 0]
    return s, a


def tensor_attributes(t: np.ndarray) -> dict[str, np.ndarray]:
    """Tensor, dilatation, shear-strain-rate and vorticity magnitudes."""
    eps, theta, omega = strain_components(t)
    return {
        "Mt": np.sqrt(0.5 * np.sum(t * t, axis=(-2, -1))),
        "Md": np.sqrt(np.sum(eps * eps, axis=-1)),
        "Ms": np.sqrt(np.sum(theta * theta, axis=-1)),
        "Mw": np.sqrt(np.sum(omega * omega, axis=-1)),
    }


def orientation(u: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """``(u_hat . n + 1) / 2``, and 0.5 where ``u`` vanishes."""
    mag = np.linalg.norm(u, axis=-1)
    out = np.full(mag.shape, 0.5)
    ok = mag > 0
    out[ok] = 0.5 * (np.einsum("...i,...i->...", u[ok], normals[ok]) / mag[ok] + 1.0)
    return np.clip(out, 0.0, 1.0)


def stack_attributes(u: np.ndarray, spacing, normals: np.ndarray | None = None,
                     occupied: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """All six attributes for a field stack, each ``(S, n, n, n)``.

    ``normals`` holds the closest-surface unit normal per cell; it is only read
    where ``u`` is non-zero and may be ``None`` if O is not wanted.
    """
    out = tensor_attributes(gradient_stack(u, spacing, occupied))
    out["M"] = np.linalg.norm(u, axis=-1)
    if normals is not None:
        out["O"] = orientation(u, normals)
    return out


def compute_attributes(field: VectorField, mesh) -> dict[str, AttributeGrid]:
    """Six attribute grids for one field; O uses the closest-surface normal at each cell centre."""
    from ilscape.geometry import closest_points

    n = field.resolution
    normals = np.zeros((n, n, n, 3))
    moving = np.linalg.norm(field.u, axis=-1) > 0
    if moving.any():
        _, nrm, _, _ = closest_points(mesh, field.cell_centers[moving])
        normals[moving] = nrm
    vals = stack_attributes(field.u[None], field.spacing, normals[None], field.count[None] > 0)
    return {a: AttributeGrid(a, vals[a][0]) for a in ATTRIBUTES}


@dataclass(frozen=True, eq=False)
class FieldStack:
    """Vector fields of the active sensors of one encoding."""

    sensor_ids: np.ndarray  # (S,)
    origins: np.ndarray  # (S, 3)
    sizes: np.ndarray  # (S,)
    u: np.ndarray  # (S, n, n, n, 3)
    count: np.ndarray  # (S, n, n, n)
    norm_mode: str

    @property
    def resolution(self) -> int:
        return self.u.shape[1]

    def __len__(self):
        return len(self.sensor_ids)

    def field(self, i: int) -> VectorField:
        return VectorField(int(self.sensor_ids[i]), self.origins[i], float(self.sizes[i]), self.u[i], self.count[i],
                           self.norm_mode)

    def index_of(self, sensor_id: int) -> int | None:
        j = int(np.searchsorted(self.sensor_ids, sensor_id))
        if j < len(self.sensor_ids) and self.sensor_ids[j] == sensor_id:
            return j
        return None


def bin_stack(tree, positions, velocities, resolution: int = 8, norm_mode: str = "average") -> FieldStack:
    """Locate every sample's sensor and cell, then accumulate all sensors at once.

    Samples outside the interaction space are dropped. Sensors that received no
    sample are inactive and left out of the stack.
    """
    _check(resolution, norm_mode)
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    vel = np.asarray(velocities, dtype=float).reshape(-1, 3)
    leaf = tree.locate_many(pos)
    keep = leaf >= 0
    pos, vel, leaf = pos[keep], vel[keep], leaf[keep]
    active, slot = np.unique(leaf, return_inverse=True)
    n = resolution
    origins = tree.leaf_origin[active]
    sizes = tree.leaf_size[active]
    ijk = cell_index(pos, origins[slot], sizes[slot], n)
    key = ((slot * n + ijk[:, 0]) * n + ijk[:, 1]) * n + ijk[:, 2]
    sums, counts = accumulate(key, vel, len(active) * n**3)
    u = normalize_sums(sums, counts, norm_mode)
    return FieldStack(active, origins, sizes, u.reshape(-1, n, n, n, 3), counts.reshape(-1, n, n, n), norm_mode)
