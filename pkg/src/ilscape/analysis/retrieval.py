"""Ranked retrieval and precision/recall evaluation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ilscape.descriptor import AttributeWeights, DescriptorError, InteractionDescriptor, distance

RECALL_GRID = np.linspace(0.0, 1.0, 11)


@dataclass(frozen=True)
class Ranked:
    id: str
    label: str | None
    distance: float


@dataclass(frozen=True)
class RetrievalResult:
    ranking: list  # of Ranked, ascending distance, ties by id
    pr: np.ndarray | None  # (m, 2) recall, interpolated precision; None when undefined

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.ranking]

    def precision_at(self, recall: float) -> float:
        return precision_at_recall(self.pr, recall)


def rank(candidates, query: InteractionDescriptor, weights: AttributeWeights | None = None,
         variant: str = "bounded") -> list[Ranked]:
    """Sort ``(id, label, descriptor)`` triples by distance to ``query``."""
    scored = [Ranked(i, lab, distance(query, d, weights, variant)) for i, lab, d in candidates]
    return sorted(scored, key=lambda r: (r.distance, r.id))


def pr_curve(relevant_flags, n_relevant: int | None = None) -> np.ndarray | None:
    """Interpolated precision at each recall level reached along a ranking.

    Walks the ranking until every relevant item is recalled. Returns ``None``
    when there is nothing relevant to recall.
    """
    flags = np.asarray(relevant_flags, dtype=bool)
    total = int(flags.sum()) if n_relevant is None else int(n_relevant)
    if total == 0:
        return None
    hits = np.cumsum(flags)
    at = np.flatnonzero(flags)
    recall = hits[at] / total
    precision = hits[at] / (at + 1.0)
    # interpolation: best precision at this or any higher recall
    interp = np.maximum.accumulate(precision[::-1])[::-1]
    return np.column_stack([recall, interp])


def precision_at_recall(pr: np.ndarray | None, recall: float) -> float:
    """Interpolated precision at ``recall``; NaN when the curve is undefined or never gets there."""
    if pr is None or len(pr) == 0:
        return math.nan
    reach = pr[:, 0] >= recall - 1e-12
    return float(pr[reach, 1].max()) if reach.any() else 0.0


def on_grid(pr: np.ndarray | None, grid=RECALL_GRID) -> np.ndarray:
    return np.array([precision_at_recall(pr, r) for r in grid])


def retrieve(db, query: InteractionDescriptor, top_k: int | None = None, *, label: str | None = None,
             exclude: str | None = None, weights: AttributeWeights | None = None, variant: str = "bounded",
             want_pr: bool = True) -> RetrievalResult:
    """Rank database entries by distance to ``query``.

    ``label`` (default: the query's own label) defines relevance for the PR
    curve; ``exclude`` drops one entry id, as in leave-one-out evaluation.
    """
    cands = [(e.id, e.label, e.descriptor) for e in db.entries if e.id != exclude]
    ranking = rank(cands, query, weights, variant)
    label = query.label if label is None else label
    pr = None
    if want_pr:
        if label is None:
            raise DescriptorError("precision/recall needs a labelled query")
        if any(r.label is None for r in ranking):
            raise DescriptorError("precision/recall needs a fully labelled database")
        pr = pr_curve([r.label == label for r in ranking])
    if top_k is not None:
        ranking = ranking[: max(0, int(top_k))]
    return RetrievalResult(ranking, pr)


@dataclass(frozen=True)
class Evaluation:
    ids: list
    nearest: list  # label of each query's nearest neighbour
    accuracy: float
    grid: np.ndarray  # recall grid
    mean_precision: np.ndarray  # mean interpolated precision on the grid (NaN-free queries only)
    precision_at_half: float


def leave_one_out(db, weights: AttributeWeights | None = None, variant: str = "bounded") -> Evaluation:
    """Every entry queries the rest of the database."""
    nearest, curves, halves = [], [], []
    correct = 0
    for e in db.entries:
        res = retrieve(db, e.descriptor, label=e.label, exclude=e.id, weights=weights, variant=variant)
        nn = res.ranking[0].label if res.ranking else None
        nearest.append(nn)
        correct += nn == e.label
        if res.pr is not None:
            curves.append(on_grid(res.pr))
            halves.append(res.precision_at(0.5))
    mean = np.mean(curves, axis=0) if curves else np.full(len(RECALL_GRID), math.nan)
    half = float(np.mean(halves)) if halves else math.nan
    return Evaluation(db.ids, nearest, correct / max(len(db), 1), RECALL_GRID.copy(), mean, half)


def write_pr_csv(pr: np.ndarray | None, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recall", "precision"])
        if pr is not None:
            for r, p in pr:
                w.writerow([f"{r:.6f}", f"{p:.6f}"])


def write_ranking_csv(ranking, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "id", "label", "distance"])
        for i, r in enumerate(ranking, 1):
            w.writerow([i, r.id, "" if r.label is None else r.label, f"{r.distance:.9f}"])
