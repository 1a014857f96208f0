"""Region correspondence between two saliency maps on a shared uniform grid."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Match:
    cell: tuple  # (i, j, k) in the canonical grid
    s1: float
    s2: float

    @property
    def score(self) -> float:
        return 1.0 - abs(self.s1 - self.s2)


def canonical(vertices: np.ndarray) -> np.ndarray:
    """Translate to the origin and scale uniformly so the largest extent is 1."""
    v = np.asarray(vertices, dtype=float)
    lo = v.min(axis=0)
    ext = float((v.max(axis=0) - lo).max())
    return (v - lo) / (ext if ext > 0 else 1.0)


def cell_means(vertices: np.ndarray, values: np.ndarray, grid_res: int) -> dict:
    ijk = np.clip(np.floor(canonical(vertices) * grid_res).astype(np.int64), 0, grid_res - 1)
    key = (ijk[:, 0] * grid_res + ijk[:, 1]) * grid_res + ijk[:, 2]
    uniq, inv = np.unique(key, return_inverse=True)
    mean = np.bincount(inv, weights=values) / np.bincount(inv)
    return dict(zip(uniq.tolist(), mean.tolist()))


def correspondence(mesh1, map1, mesh2, map2, grid_res: int = 8, min_saliency: float = 0.0) -> list[Match]:
    """Cells occupied by both shapes, best-matching first.

    Ranking is by ``|s1 - s2|`` ascending, then by mean saliency descending,
    then by cell index. Cells where neither shape reaches ``min_saliency`` are
    dropped.
    """
    if int(grid_res) < 2:
        raise ValueError("grid_res must be >= 2")
    grid_res = int(grid_res)
    m1 = cell_means(mesh1.vertices, np.asarray(map1.values, dtype=float), grid_res)
    m2 = cell_means(mesh2.vertices, np.asarray(map2.values, dtype=float), grid_res)
    out = []
    for key in sorted(set(m1) & set(m2)):
        s1, s2 = m1[key], m2[key]
        if max(s1, s2) < min_saliency:
            continue
        i, rem = divmod(key, grid_res * grid_res)
        j, k = divmod(rem, grid_res)
        out.append((abs(s1 - s2), -(s1 + s2), key, Match((i, j, k), s1, s2)))
    out.sort(key=lambda r: r[:3])
    return [r[3] for r in out]


def write_matches_csv(matches, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "i", "j", "k", "s1", "s2", "score"])
        for r, m in enumerate(matches, 1):
            w.writerow([r, *m.cell, f"{m.s1:.9f}", f"{m.s2:.9f}", f"{m.score:.9f}"])
