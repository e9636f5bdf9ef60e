"""Security news report parsing and entity extraction.

A report file is plain text: the title on the first line, a blank
line, then the body. CVE ids are pulled with the canonical pattern
(four-digit year, four to seven digit sequence number) and
deduplicated preserving first mention, which later stages rely on.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Sequence

from . import lineio
from .errors import IngestionError

CVE_MENTION = re.compile(r"\bCVE-\d{4}-\d{4,7}\b", re.IGNORECASE)


@dataclass
class NewsReport:
    report_id: str
    title: str
    body: str
    mentioned_cves: list[str] = field(default_factory=list)
    vendors_products: list[str] = field(default_factory=list)

    @property
    def text(self) -> str:
        return f"{self.title}\n{self.body}"


def extract_cve_ids(text: str) -> list[str]:
    """All CVE ids mentioned, uppercased, first-mention order, no repeats."""
    seen: set[str] = set()
    ordered: list[str] = []
    for match in CVE_MENTION.finditer(text):
        cve_id = match.group(0).upper()
        if cve_id not in seen:
            seen.add(cve_id)
            ordered.append(cve_id)
    return ordered


def extract_products(text: str, vocabulary: Sequence[str]) -> list[str]:
    """Vocabulary terms present in the text as whole words.

    Matching is case-insensitive and longest-match-first: once a span is
    claimed by a longer term, shorter terms cannot match inside it.
    Returned terms keep vocabulary casing and order, each at most once.
    """
    if not vocabulary:
        raise ValueError("product vocabulary is empty")
    claimed: list[tuple[int, int]] = []
    found: set[str] = set()
    for term in sorted(vocabulary, key=len, reverse=True):
        pattern = re.compile(r"(?<!\w)" + re.escape(term) + r"(?!\w)", re.IGNORECASE)
        for match in pattern.finditer(text):
            span = match.span()
            if any(span[0] < end and start < span[1] for start, end in claimed):
                continue
            claimed.append(span)
            found.add(term)
    return [term for term in dict.fromkeys(vocabulary) if term in found]


def parse_report(
    raw: str, report_id: str, vocabulary: Sequence[str] = ()
) -> NewsReport:
    """Parse one report's raw text into a NewsReport.

    The first line is the title; everything after the first line is the
    body (leading blank lines dropped). Missing title or body is an
    ingestion error naming the report.
    """
    lines = raw.split("\n")
    title = lines[0].strip()
    body = "\n".join(lines[1:]).strip()
    if not title:
        raise IngestionError(f"report {report_id}: first line (title) is empty")
    if not body:
        raise IngestionError(f"report {report_id}: body is empty")
    mentioned = extract_cve_ids(f"{title}\n{body}")
    products = extract_products(f"{title}\n{body}", vocabulary) if vocabulary else []
    return NewsReport(report_id, title, body, mentioned, products)


def load_reports(
    manifest_path: str | os.PathLike, vocabulary: Sequence[str] = ()
) -> list[NewsReport]:
    """Load reports listed in a manifest of ``{"report_id", "file"}`` rows.

    File paths are resolved relative to the manifest. Duplicate report
    ids and unreadable files are ingestion errors; callers get either
    the full set or a clear failure.
    """
    manifest_path = os.fspath(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    reports: list[NewsReport] = []
    seen: set[str] = set()
    for lineno, obj in lineio.read_rows(manifest_path, "report-manifest"):
        report_id = obj.get("report_id")
        rel = obj.get("file")
        if not isinstance(report_id, str) or not isinstance(rel, str):
            raise IngestionError(f"{manifest_path}:{lineno}: bad manifest row")
        if report_id in seen:
            raise IngestionError(f"{manifest_path}:{lineno}: duplicate report id {report_id}")
        seen.add(report_id)
        full = os.path.join(base, rel)
        try:
            with open(full, "r", encoding="utf-8") as fh:
                raw = fh.read()
        except OSError as exc:
            raise IngestionError(f"{manifest_path}:{lineno}: cannot read {full}: {exc}") from exc
        reports.append(parse_report(raw, report_id, vocabulary))
    return reports
