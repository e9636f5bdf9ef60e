"""Validation of report-to-CVE predictions by four independent methods.

Given per-report ranked predictions, each method assigns every
prediction a relevant / not_relevant verdict:

* M1: majority vote over human annotations; an exact tie excludes the
  prediction from the tallies.
* M2: the prediction's own retrieval score against the threshold.
* M3: similarity between the predicted CVE's description and the
  description of the report's first-mentioned CVE.
* M4: as M3, but the reference is all mentioned CVE descriptions
  concatenated in first-mention order.

M3/M4 only apply to reports that mention at least one CVE; others are
excluded and listed on the outcome. The exact-match partition is a
separate, stricter view: did the system retrieve an id the report
already names.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .embedder import Backend
from .errors import IngestionError, InputError, ResolutionError
from .index import Prediction
from .news import NewsReport
from .textprep import normalize

RELEVANT = "relevant"
NOT_RELEVANT = "not_relevant"
TIE = "tie"
UNLABELED = "unlabeled"

METHODS = ("M1", "M2", "M3", "M4")


@dataclass(frozen=True)
class ManualLabel:
    report_id: str
    cve_id: str
    annotator: str
    verdict: str


@dataclass
class ValidationOutcome:
    method: str
    relevant: int = 0
    not_relevant: int = 0
    per_report: dict[str, list[tuple[str, str]]] = field(default_factory=dict)
    ties: int = 0
    coverage_gaps: list[tuple[str, str]] = field(default_factory=list)
    excluded_reports: list[str] = field(default_factory=list)

    @property
    def evaluated(self) -> int:
        return self.relevant + self.not_relevant

    @property
    def relevant_share(self) -> float:
        return self.relevant / self.evaluated if self.evaluated else 0.0


@dataclass(frozen=True)
class ExactMatchCounts:
    matched: int
    unseen_only: int
    no_mentions: int

    @property
    def total(self) -> int:
        return self.matched + self.unseen_only + self.no_mentions


def load_labels(path: str | os.PathLike) -> list[ManualLabel]:
    """Read annotator labels from CSV: report_id,cve_id,annotator,verdict."""
    path = os.fspath(path)
    labels: list[ManualLabel] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"report_id", "cve_id", "annotator", "verdict"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise IngestionError(f"{path}: label file needs columns {sorted(required)}")
        for row_no, row in enumerate(reader, start=2):
            verdict = (row["verdict"] or "").strip()
            if verdict not in (RELEVANT, NOT_RELEVANT):
                raise IngestionError(
                    f"{path}:{row_no}: verdict must be {RELEVANT} or "
                    f"{NOT_RELEVANT}, got {verdict!r}"
                )
            labels.append(
                ManualLabel(
                    row["report_id"].strip(), row["cve_id"].strip(),
                    row["annotator"].strip(), verdict,
                )
            )
    return labels


def evaluate_m1(
    predictions: Mapping[str, Sequence[Prediction]],
    labels: Iterable[ManualLabel],
) -> ValidationOutcome:
    """Manual-annotation verdicts by per-prediction majority vote.

    Labels must reference known reports and predicted CVE ids; anything
    else indicates a mixed-up label file and raises. A prediction with
    no labels at all is a coverage gap, reported but not counted.
    """
    votes: dict[tuple[str, str], list[str]] = {}
    predicted_ids = {
        rid: {p.cve_id for p in preds} for rid, preds in predictions.items()
    }
    for lab in labels:
        if lab.report_id not in predicted_ids:
            raise InputError(f"label references unknown report {lab.report_id!r}")
        if lab.cve_id not in predicted_ids[lab.report_id]:
            raise InputError(
                f"label for report {lab.report_id} references {lab.cve_id}, "
                f"which was never predicted"
            )
        votes.setdefault((lab.report_id, lab.cve_id), []).append(lab.verdict)

    outcome = ValidationOutcome(method="M1")
    for rid in sorted(predictions):
        rows: list[tuple[str, str]] = []
        for pred in predictions[rid]:
            cast = votes.get((rid, pred.cve_id))
            if cast is None:
                outcome.coverage_gaps.append((rid, pred.cve_id))
                rows.append((pred.cve_id, UNLABELED))
                continue
            yes = sum(1 for v in cast if v == RELEVANT)
            no = len(cast) - yes
            if yes > no:
                outcome.relevant += 1
                rows.append((pred.cve_id, RELEVANT))
            elif no > yes:
                outcome.not_relevant += 1
                rows.append((pred.cve_id, NOT_RELEVANT))
            else:
                outcome.ties += 1
                rows.append((pred.cve_id, TIE))
        outcome.per_report[rid] = rows
    return outcome


def evaluate_m2(
    predictions: Mapping[str, Sequence[Prediction]], rho: float
) -> ValidationOutcome:
    """Relevance by each prediction's own retrieval score: score >= rho."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be within [0, 1], got {rho}")
    outcome = ValidationOutcome(method="M2")
    for rid in sorted(predictions):
        rows = []
        for pred in predictions[rid]:
            if pred.score >= rho:
                outcome.relevant += 1
                rows.append((pred.cve_id, RELEVANT))
            else:
                outcome.not_relevant += 1
                rows.append((pred.cve_id, NOT_RELEVANT))
        outcome.per_report[rid] = rows
    return outcome


def _as_text_map(cve_corpus) -> dict[str, str]:
    if isinstance(cve_corpus, Mapping):
        return dict(cve_corpus)
    return {rec.cve_id: rec.description for rec in cve_corpus}


def _evaluate_against_reference(
    method: str,
    predictions: Mapping[str, Sequence[Prediction]],
    reports: Sequence[NewsReport],
    texts: dict[str, str],
    backend: Backend,
    rho: float,
    reference_text: Callable[[NewsReport], str],
) -> ValidationOutcome:
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be within [0, 1], got {rho}")
    report_by_id = {r.report_id: r for r in reports}
    outcome = ValidationOutcome(method=method)

    def resolve(cve_id: str, where: str) -> str:
        try:
            return texts[cve_id]
        except KeyError:
            raise ResolutionError(
                f"{where} references {cve_id}, which is not in the CVE corpus"
            ) from None

    # Gather every text this evaluation touches, embed each once.
    jobs: list[tuple[str, NewsReport, str]] = []  # (rid, report, ref raw text)
    needed: dict[str, None] = {}
    for rid in sorted(predictions):
        report = report_by_id.get(rid)
        if report is None:
            raise InputError(f"predictions reference unknown report {rid!r}")
        if not report.mentioned_cves:
            outcome.excluded_reports.append(rid)
            continue
        for cve_id in report.mentioned_cves:
            resolve(cve_id, f"report {rid}")
        ref_raw = reference_text(report)
        jobs.append((rid, report, ref_raw))
        needed[normalize(ref_raw)] = None
        for pred in predictions[rid]:
            needed[normalize(resolve(pred.cve_id, f"report {rid} prediction"))] = None

    if jobs:
        ordered = list(needed)
        matrix = backend.encode(ordered).astype(np.float64)
        vec = {text: matrix[i] for i, text in enumerate(ordered)}
        for rid, report, ref_raw in jobs:
            ref_vec = vec[normalize(ref_raw)]
            rows = []
            for pred in predictions[rid]:
                pred_vec = vec[normalize(texts[pred.cve_id])]
                sim = float(np.clip(np.dot(pred_vec, ref_vec), -1.0, 1.0))
                if sim >= rho:
                    outcome.relevant += 1
                    rows.append((pred.cve_id, RELEVANT))
                else:
                    outcome.not_relevant += 1
                    rows.append((pred.cve_id, NOT_RELEVANT))
            outcome.per_report[rid] = rows
    return outcome


def evaluate_m3(
    predictions: Mapping[str, Sequence[Prediction]],
    reports: Sequence[NewsReport],
    cve_corpus,
    backend: Backend,
    rho: float,
) -> ValidationOutcome:
    """Similarity to the first-mentioned CVE's description, against rho."""
    texts = _as_text_map(cve_corpus)
    return _evaluate_against_reference(
        "M3", predictions, reports, texts, backend, rho,
        reference_text=lambda report: texts[report.mentioned_cves[0]],
    )


def evaluate_m4(
    predictions: Mapping[str, Sequence[Prediction]],
    reports: Sequence[NewsReport],
    cve_corpus,
    backend: Backend,
    rho: float,
) -> ValidationOutcome:
    """Similarity to all mentioned CVE descriptions, concatenated in
    first-mention order with single spaces, against rho."""
    texts = _as_text_map(cve_corpus)
    return _evaluate_against_reference(
        "M4", predictions, reports, texts, backend, rho,
        reference_text=lambda report: " ".join(
            texts[c] for c in report.mentioned_cves
        ),
    )


def exact_match_rate(
    predictions: Mapping[str, Sequence[Prediction]],
    reports: Sequence[NewsReport],
) -> ExactMatchCounts:
    """Partition reports by whether a predicted id is literally mentioned.

    A report with no CVE mentions cannot match and lands in its own
    bucket; the three buckets cover every report exactly once.
    """
    matched = unseen = no_mentions = 0
    for report in reports:
        if not report.mentioned_cves:
            no_mentions += 1
            continue
        predicted = {p.cve_id for p in predictions.get(report.report_id, ())}
        if predicted & set(report.mentioned_cves):
            matched += 1
        else:
            unseen += 1
    return ExactMatchCounts(matched, unseen, no_mentions)


def write_outcomes_csv(
    outcomes: Sequence[ValidationOutcome], path: str | os.PathLike
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "evaluated", "relevant", "not_relevant", "relevant_pct"]
        )
        for out in outcomes:
            writer.writerow(
                [
                    out.method, out.evaluated, out.relevant, out.not_relevant,
                    f"{100.0 * out.relevant_share:.1f}",
                ]
            )
