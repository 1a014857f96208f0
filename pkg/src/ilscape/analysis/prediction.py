"""Descriptors of growing time windows and early recognition of an interaction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ilscape.descriptor import AttributeWeights, DescriptorError, InteractionDescriptor, NoInteractionError
from ilscape.analysis.retrieval import RECALL_GRID, RetrievalResult, on_grid, pr_curve, rank


@dataclass(frozen=True, eq=False)
class SegmentedSignature:
    descriptors: tuple  # k = 1..N; None where the window held no samples
    windows: tuple  # (t0, t1) per k

    @property
    def n_segments(self) -> int:
        return len(self.descriptors)


def segment_windows(t_begin: float, t_end: float, n_seg: int) -> list[tuple[float, float]]:
    """Cumulative windows ``[t_begin, t_begin + k/N d]``; the last ends exactly at ``t_end``."""
    if int(n_seg) < 2:
        raise ValueError("n_seg must be >= 2")
    duration = t_end - t_begin
    if not duration > 0:
        raise ValueError("interaction duration must be positive")
    end = t_end
    return [(t_begin, end if k == n_seg else t_begin + k / n_seg * duration) for k in range(1, n_seg + 1)]


def segment_signatures(scene, trajectories, n_seg: int = 8, params=None, label=None) -> SegmentedSignature:
    ts = scene.prepare(trajectories, params) if params is not None else trajectories
    windows = segment_windows(ts.t_begin, float(ts.t.max()) if len(ts) else 0.0, n_seg)
    out = []
    for t0, t1 in windows:
        try:
            out.append(scene.encode(ts, params, t0, t1, label))
        except NoInteractionError:
            out.append(None)
    return SegmentedSignature(tuple(out), tuple(windows))


def predict(db, query: InteractionDescriptor, k: int, *, label: str | None = None, exclude: str | None = None,
            weights: AttributeWeights | None = None, variant: str = "bounded") -> RetrievalResult:
    """Rank entries by their segment-k descriptor; entries with an empty window are skipped."""
    n = db.n_segments
    if n == 0:
        raise DescriptorError("database entries carry no segment descriptors")
    if not 1 <= k <= n:
        raise DescriptorError(f"segment index k={k} out of range 1..{n}")
    cands = [(e.id, e.label, e.segments[k - 1]) for e in db.entries
             if e.id != exclude and e.segments[k - 1] is not None]
    ranking = rank(cands, query, weights, variant)
    label = query.label if label is None else label
    pr = pr_curve([r.label == label for r in ranking]) if label is not None else None
    return RetrievalResult(ranking, pr)


@dataclass(frozen=True)
class PredictionReport:
    k: int
    precision_at_half: float  # mean over queries with a defined curve
    mean_precision: np.ndarray  # on RECALL_GRID
    nearest_accuracy: float
    queries: int


def evaluate_prediction(db, weights: AttributeWeights | None = None, variant: str = "bounded") -> list[PredictionReport]:
    """Leave-one-out prediction quality for every k."""
    reports = []
    for k in range(1, db.n_segments + 1):
        halves, curves, correct, queries = [], [], 0, 0
        for e in db.entries:
            q = e.segments[k - 1]
            if q is None:
                continue
            res = predict(db, q, k, label=e.label, exclude=e.id, weights=weights, variant=variant)
            queries += 1
            correct += bool(res.ranking) and res.ranking[0].label == e.label
            if res.pr is not None:
                halves.append(res.precision_at(0.5))
                curves.append(on_grid(res.pr))
        reports.append(PredictionReport(
            k,
            float(np.mean(halves)) if halves else math.nan,
            np.mean(curves, axis=0) if curves else np.full(len(RECALL_GRID), math.nan),
            correct / queries if queries else math.nan,
            queries,
        ))
    return reports
