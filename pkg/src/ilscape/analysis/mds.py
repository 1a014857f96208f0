"""Classical (Torgerson) multidimensional scaling and a small SVG scatter writer."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from html import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
           "#17becf")
VIEW = 800


class MDSError(ValueError):
    pass


@dataclass(frozen=True)
class Embedding:
    points: np.ndarray  # (n, dims)
    eigenvalues: np.ndarray  # kept eigenvalues, descending, clamped at 0
    error: float  # Frobenius norm of embedded minus input distances


def mds_embed(matrix, dims: int = 2, tol: float = 1e-9) -> Embedding:
    """Embed a distance matrix in ``dims`` dimensions.

    ``B = -1/2 J D^2 J``; coordinates are the top eigenvectors scaled by the
    square root of their (non-negative) eigenvalues. Each axis is flipped so its
    first clearly non-zero coordinate is positive.
    """
    d = np.asarray(matrix, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise MDSError("distance matrix must be square")
    n = d.shape[0]
    if n < 3:
        raise MDSError("need at least 3 points")
    scale = max(float(np.abs(d).max()), 1.0)
    if not np.allclose(d, d.T, atol=tol * scale, rtol=0):
        raise MDSError("distance matrix is not symmetric")
    if np.any(np.abs(np.diag(d)) > tol * scale):
        raise MDSError("distance matrix has a non-zero diagonal")
    j = np.eye(n) - 1.0 / n
    b = -0.5 * j @ (d**2) @ j
    b = 0.5 * (b + b.T)
    vals, vecs = np.linalg.eigh(b)
    order = np.argsort(-vals, kind="stable")[:dims]
    lam = np.clip(vals[order], 0.0, None)
    pts = vecs[:, order] * np.sqrt(lam)
    thr = 1e-9 * max(float(np.abs(pts).max()), 1.0)
    for k in range(pts.shape[1]):
        nz = np.flatnonzero(np.abs(pts[:, k]) > thr)
        if len(nz) and pts[nz[0], k] < 0:
            pts[:, k] = -pts[:, k]
        pts[np.abs(pts[:, k]) <= thr, k] = 0.0
    diff = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)) - d
    return Embedding(pts, lam, float(np.linalg.norm(diff)))


def write_points_csv(ids, labels, points, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", "x", "y"])
        for i, lab, p in zip(ids, labels, points):
            w.writerow([i, "" if lab is None else lab, f"{p[0]:.9f}", f"{p[1]:.9f}"])


def scatter_svg(ids, labels, points, title: str = "") -> str:
    """Fixed 800x800 scatter plot, one colour per label, with a legend."""
    pts = np.asarray(points, dtype=float)[:, :2]
    names = sorted({"" if lab is None else str(lab) for lab in labels})
    colour = {name: PALETTE[i % len(PALETTE)] for i, name in enumerate(names)}
    margin, legend_w = 60.0, 160.0
    lo = pts.min(axis=0) if len(pts) else np.zeros(2)
    span = float((pts.max(axis=0) - lo).max()) if len(pts) else 0.0
    span = span if span > 0 else 1.0
    plot = VIEW - 2 * margin - legend_w
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {VIEW} {VIEW}" width="{VIEW}" height="{VIEW}">',
        f'<rect x="0" y="0" width="{VIEW}" height="{VIEW}" fill="#ffffff"/>',
        f'<rect x="{margin:.0f}" y="{margin:.0f}" width="{plot:.0f}" height="{plot:.0f}" fill="none" '
        'stroke="#cccccc"/>',
    ]
    if title:
        out.append(f'<text x="{margin:.0f}" y="{margin / 2:.0f}" font-family="sans-serif" font-size="18">'
                   f"{escape(title)}</text>")
    for i, lab, p in zip(ids, labels, pts):
        x = margin + (p[0] - lo[0]) / span * plot
        y = margin + plot - (p[1] - lo[1]) / span * plot
        name = "" if lab is None else str(lab)
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="6" fill="{colour[name]}" fill-opacity="0.85">'
                   f"<title>{escape(str(i))}</title></circle>")
    lx = VIEW - legend_w - margin / 2
    for k, name in enumerate(names):
        y = margin + 24 * k
        out.append(f'<rect x="{lx:.0f}" y="{y:.0f}" width="14" height="14" fill="{colour[name]}"/>')
        out.append(f'<text x="{lx + 22:.0f}" y="{y + 12:.0f}" font-family="sans-serif" font-size="14">'
                   f"{escape(name or '(unlabelled)')}</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(ids, labels, points, path, title: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(scatter_svg(ids, labels, points, title))
