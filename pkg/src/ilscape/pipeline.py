"""End-to-end encoding: mesh and trajectories in, interaction descriptor out."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ilscape.descriptor import (
    DEFAULT_BINS,
    InteractionDescriptor,
    NoInteractionError,
    check_bins,
    check_scales,
    check_unit_sum,
    distance_weight,
    histogram_rows,
    volume_weighted_mean,
)
from ilscape.flowfield import (
    ATTRIBUTES,
    NORM_MODES,
    RESOLUTIONS,
    FieldStack,
    bin_stack,
    gradient_stack,
    orientation,
    tensor_attributes,
)
from ilscape.geometry import Mesh, SurfaceSampleSet, closest_points, poisson_disk_sample
from ilscape.sensor_grid import InteractionSpace, SensorTree, build_sensor_tree, build_space
from ilscape.trajectory import DEFAULT_DT, TrajectorySet, clip_to_window, resample

log = logging.getLogger(__name__)

SPACING_FRACTION = 0.04  # default sample spacing relative to the mesh's largest extent
_CHUNK = 256  # sensors per gradient batch


@dataclass(frozen=True)
class EncodingParams:
    resolution: int = 8
    norm_mode: str = "average"
    bins: int = DEFAULT_BINS
    scales: dict = field(default_factory=dict)
    dt: float = DEFAULT_DT

    def __post_init__(self):
        object.__setattr__(self, "scales", check_scales(self.scales))
        object.__setattr__(self, "bins", check_bins(self.bins))
        if self.resolution not in RESOLUTIONS:
            raise ValueError(f"resolution must be one of {RESOLUTIONS}, got {self.resolution}")
        if self.norm_mode not in NORM_MODES:
            raise ValueError(f"norm_mode must be one of {NORM_MODES}, got {self.norm_mode!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True, eq=False)
class Encoding:
    """Everything computed while encoding one trajectory window."""

    descriptor: InteractionDescriptor
    stack: FieldStack
    occupied: np.ndarray  # (K,) flat cell index into the stack, ascending
    values: dict  # attribute -> (K,) raw value at occupied cells
    distance: np.ndarray  # (K,) cell centre to surface
    local_raw: dict  # attribute -> (S, bins) literal bins before normalization
    n_samples: int


class Scene:
    """A static mesh with its interaction space and sensor octree.

    Closest-surface queries for cell centres are cached, so encoding many
    windows or variants of motion around the same object pays for them once.
    """

    def __init__(self, mesh: Mesh, space: InteractionSpace, samples: SurfaceSampleSet, tree: SensorTree):
        self.mesh = mesh
        self.space = space
        self.samples = samples
        self.tree = tree
        self._cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    @classmethod
    def build(cls, mesh: Mesh, domain_size="auto", up_axis: str = "z", sample_spacing: float | None = None,
              max_depth: int = 8, seed: int = 0) -> "Scene":
        space = build_space(mesh, domain_size, up_axis)
        lo, hi = mesh.bounds
        c = SPACING_FRACTION * float((hi - lo).max()) if sample_spacing is None else float(sample_spacing)
        samples = poisson_disk_sample(mesh, c, rng_seed=seed)
        tree = build_sensor_tree(space, samples, max_depth)
        log.info("scene: %d surface samples, %d sensors", len(samples.points), tree.n_leaves)
        return cls(mesh, space, samples, tree)

    # -- surface cache ---------------------------------------------------------

    def surface_info(self, keys: np.ndarray, centers: np.ndarray, resolution: int):
        """Closest-surface distance and unit normal for cells named by ``sensor * n^3 + cell``."""
        cached_keys, cached_d, cached_n = self._cache.get(
            resolution, (np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros((0, 3)))
        )
        if len(cached_keys):
            pos_c = np.minimum(np.searchsorted(cached_keys, keys), len(cached_keys) - 1)
            hit = cached_keys[pos_c] == keys
        else:
            pos_c = np.zeros(len(keys), dtype=np.int64)
            hit = np.zeros(len(keys), dtype=bool)
        dist = np.empty(len(keys))
        normals = np.empty((len(keys), 3))
        if hit.any():
            dist[hit] = cached_d[pos_c[hit]]
            normals[hit] = cached_n[pos_c[hit]]
        miss = ~hit
        if miss.any():
            _, nrm, d, _ = closest_points(self.mesh, centers[miss])
            dist[miss] = d
            normals[miss] = nrm
            all_keys = np.concatenate([cached_keys, keys[miss]])
            order = np.argsort(all_keys, kind="stable")
            self._cache[resolution] = (
                all_keys[order],
                np.concatenate([cached_d, d])[order],
                np.concatenate([cached_n, nrm])[order],
            )
        return dist, normals

    # -- encoding --------------------------------------------------------------

    def prepare(self, trajectories: TrajectorySet, params: EncodingParams, t0=None, t1=None) -> TrajectorySet:
        ts = trajectories
        if len(ts) and abs(ts.dt - params.dt) > 1e-9 * params.dt:
            ts = resample(ts, params.dt)
        if t0 is not None or t1 is not None:
            lo = 0.0 if t0 is None else float(t0)  # times are non-negative
            hi = float(ts.t.max()) if t1 is None else float(t1)
            ts = clip_to_window(ts, lo, hi)
        return ts

    def analyze(self, trajectories: TrajectorySet, params: EncodingParams | None = None, t0=None, t1=None,
                label: str | None = None) -> Encoding:
        params = params or EncodingParams()
        ts = self.prepare(trajectories, params, t0, t1)
        if len(ts) == 0:
            raise NoInteractionError("no interaction captured: the time window holds no trajectory samples")
        stack = bin_stack(self.tree, ts.position, ts.velocity, params.resolution, params.norm_mode)
        if len(stack) == 0:
            raise NoInteractionError("no interaction captured: every trajectory sample lies outside the space")
        n = params.resolution
        n3 = n**3
        count_flat = stack.count.reshape(-1)
        occupied = np.flatnonzero(count_flat > 0)
        slot = occupied // n3
        cell = occupied % n3
        ijk = np.column_stack([cell // (n * n), (cell // n) % n, cell % n])
        centers = stack.origins[slot] + stack.sizes[slot, None] * (ijk + 0.5) / n
        keys = stack.sensor_ids[slot] * n3 + cell
        dist, normals = self.surface_info(keys, centers, n)

        u_flat = stack.u.reshape(-1, 3)
        values = {a: np.empty(len(occupied)) for a in ATTRIBUTES}
        spacing = stack.sizes / n
        bounds = np.searchsorted(slot, np.arange(0, len(stack) + _CHUNK, _CHUNK))
        for c, s0 in enumerate(range(0, len(stack), _CHUNK)):
            s1 = min(s0 + _CHUNK, len(stack))
            part = slice(bounds[c], bounds[c + 1])
            local = occupied[part] - s0 * n3
            t = gradient_stack(stack.u[s0:s1], spacing[s0:s1], stack.count[s0:s1] > 0).reshape(-1, 3, 3)[local]
            for a, v in tensor_attributes(t).items():
                values[a][part] = v
        u_occ = u_flat[occupied]
        values["M"] = np.linalg.norm(u_occ, axis=1)
        values["O"] = orientation(u_occ, normals)

        weight = distance_weight(dist, stack.sizes[slot])
        hists = {}
        raw = {}
        for a in ATTRIBUTES:
            norm, raw[a] = histogram_rows(values[a], slot, weight, len(stack), params.bins, params.scales[a])
            hists[a] = volume_weighted_mean(norm, stack.sizes)
            check_unit_sum(hists[a], a)
        label = ts.label if label is None else label
        desc = InteractionDescriptor(hists, params.bins, n, params.norm_mode, dict(params.scales), len(stack), label)
        return Encoding(desc, stack, occupied, values, dist, raw, len(ts))

    def encode(self, trajectories: TrajectorySet, params: EncodingParams | None = None, t0=None, t1=None,
               label: str | None = None) -> InteractionDescriptor:
        return self.analyze(trajectories, params, t0, t1, label).descriptor


def encode_scene(mesh: Mesh, trajectories: TrajectorySet, params: EncodingParams | None = None, *,
                 domain_size="auto", up_axis: str = "z", sample_spacing=None, max_depth: int = 8, seed: int = 0,
                 t0=None, t1=None, label=None) -> InteractionDescriptor:
    """One-shot convenience wrapper around ``Scene.build(...).encode(...)``."""
    scene = Scene.build(mesh, domain_size, up_axis, sample_spacing, max_depth, seed)
    return scene.encode(trajectories, params, t0, t1, label)
