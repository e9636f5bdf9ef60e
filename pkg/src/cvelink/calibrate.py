"""Threshold and top-k calibration against a linked ground truth.

The unit of evaluation is an attack entry: the system proposes a set L
of CVE ids (thresholded similarity) and the mapping provides the ground
truth set M. Set-level outcomes:

    overlap               -> true positive
    proposals, no truth   -> false positive
    proposals and truth disjoint -> false positive
    no proposals, truth   -> false negative
    neither               -> true negative

Precision, recall, and F1 follow from the counts with the convention
that an undefined ratio (zero denominator) is 0. The threshold sweep
reuses exactly this counting on singleton sets so the curve can never
drift from the headline metrics.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .embedder import Backend
from .index import VectorIndex, apply_threshold, rank_top_k
from .textprep import normalize

DEFAULT_RHO_GRID: tuple[float, ...] = tuple(round(i / 100, 2) for i in range(101))
DEFAULT_K_VALUES: tuple[int, ...] = (1, 5, 10, 20, 50)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricTriple:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ScoredPair:
    """One similarity observation with its ground-truth polarity."""

    score: float
    positive: bool


@dataclass(frozen=True)
class PrPoint:
    rho: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class KSensitivityRow:
    k: int
    precision: float
    recall: float
    f1: float


def confusion_counts(outcomes: Iterable[tuple[set[str], set[str]]]) -> ConfusionCounts:
    """Count set-level outcomes over (proposed, truth) pairs."""
    tp = fp = fn = tn = 0
    for proposed, truth in outcomes:
        if proposed and truth:
            if proposed & truth:
                tp += 1
            else:
                fp += 1
        elif proposed:
            fp += 1
        elif truth:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def compute_metrics(counts: ConfusionCounts) -> MetricTriple:
    """Precision, recall, F1 from counts; zero denominators give 0.0."""
    denom_p = counts.tp + counts.fp
    denom_r = counts.tp + counts.fn
    precision = counts.tp / denom_p if denom_p else 0.0
    recall = counts.tp / denom_r if denom_r else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0.0
        else 0.0
    )
    return MetricTriple(precision, recall, f1)


def score_pairs(backend: Backend, pairs: Sequence) -> list[ScoredPair]:
    """Embed both texts of each labeled pair and record their similarity.

    ``pairs`` need ``attack_text``, ``cve_text``, and ``positive``
    attributes. Each distinct text is embedded once.
    """
    texts: dict[str, int] = {}
    for p in pairs:
        for raw in (p.attack_text, p.cve_text):
            cleaned = normalize(raw)
            if cleaned not in texts:
                texts[cleaned] = len(texts)
    if not texts:
        return []
    ordered = sorted(texts, key=texts.get)
    matrix = backend.encode(ordered).astype(np.float64)
    scored = []
    for p in pairs:
        a = matrix[texts[normalize(p.attack_text)]]
        c = matrix[texts[normalize(p.cve_text)]]
        sim = float(np.clip(np.dot(a, c), -1.0, 1.0))
        scored.append(ScoredPair(score=sim, positive=p.positive))
    return scored


def pr_curve(
    scored: Sequence[ScoredPair],
    rho_grid: Sequence[float] = DEFAULT_RHO_GRID,
) -> list[PrPoint]:
    """Sweep the threshold over a grid and report P/R/F1 at each point.

    Each pair is treated as its own one-element decision: the proposal
    set is {pair} when score >= rho, else empty, and the truth set is
    {pair} when the pair is positive. That reduces the sweep to the same
    confusion counting used everywhere else.
    """
    if not scored:
        raise ValueError("need at least one scored pair")
    if len(rho_grid) == 0:
        raise ValueError("rho grid is empty")
    grid = [float(r) for r in rho_grid]
    if any(not 0.0 <= r <= 1.0 for r in grid):
        raise ValueError("rho grid values must lie within [0, 1]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("rho grid must be strictly increasing")
    scores = np.array([p.score for p in scored], dtype=np.float64)
    positive = np.array([p.positive for p in scored], dtype=bool)
    points = []
    for rho in grid:
        kept = scores >= rho
        tp = int(np.sum(kept & positive))
        fp = int(np.sum(kept & ~positive))
        fn = int(np.sum(~kept & positive))
        tn = int(np.sum(~kept & ~positive))
        triple = compute_metrics(ConfusionCounts(tp, fp, fn, tn))
        points.append(PrPoint(rho, triple.precision, triple.recall, triple.f1))
    return points


def find_eer(curve: Sequence[PrPoint]) -> float:
    """Grid threshold where precision and recall are closest.

    Ties go to the smaller rho so the answer is stable under grid
    refinement at the flat part of the curve.
    """
    if not curve:
        raise ValueError("cannot pick a threshold from an empty curve")
    best = min(curve, key=lambda pt: (abs(pt.precision - pt.recall), pt.rho))
    return best.rho


def k_sensitivity(
    cases: Sequence[tuple[np.ndarray, set[str]]],
    index: VectorIndex,
    k_values: Sequence[int] = DEFAULT_K_VALUES,
    rho: float = 0.0,
) -> list[KSensitivityRow]:
    """Metrics of thresholded top-k retrieval as k varies.

    ``cases`` pair a query vector with its ground-truth CVE id set.
    For every k the ranking and thresholding are exactly the production
    path: rank_top_k then apply_threshold.
    """
    if any(k < 1 for k in k_values):
        raise ValueError("all k values must be >= 1")
    if not cases:
        raise ValueError("need at least one query case")
    rows = []
    for k in k_values:
        outcomes = []
        for query, truth in cases:
            kept = apply_threshold(rank_top_k(query, index, k), rho)
            outcomes.append(({p.cve_id for p in kept}, set(truth)))
        triple = compute_metrics(confusion_counts(outcomes))
        rows.append(KSensitivityRow(int(k), triple.precision, triple.recall, triple.f1))
    return rows


def write_pr_curve_csv(points: Sequence[PrPoint], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho", "precision", "recall", "f1"])
        for pt in points:
            writer.writerow(
                [f"{pt.rho:.2f}", f"{pt.precision:.6f}", f"{pt.recall:.6f}", f"{pt.f1:.6f}"]
            )


def write_k_sensitivity_csv(rows: Sequence[KSensitivityRow], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "precision", "recall", "f1"])
        for row in rows:
            writer.writerow(
                [row.k, f"{row.precision:.6f}", f"{row.recall:.6f}", f"{row.f1:.6f}"]
            )
