"""Versioned JSON-lines files.

Every JSONL artifact this package writes starts with a one-line header
naming the payload kind and format version, e.g. ``#cvelink/mapping v1``.
Readers reject missing headers, wrong kinds, and unknown versions up
front instead of failing on record three.
"""

from __future__ import annotations

import json
import os
from typing import Any, Iterable, Iterator

from .errors import IngestionError

HEADER_PREFIX = "#cvelink/"
VERSION = 1


def header_line(kind: str, version: int = VERSION) -> str:
    return f"{HEADER_PREFIX}{kind} v{version}"


def check_header(line: str, kind: str, path: str) -> None:
    expected = header_line(kind)
    got = line.rstrip("\n")
    if got == expected:
        return
    if got.startswith(f"{HEADER_PREFIX}{kind} v"):
        raise IngestionError(
            f"{path}: {kind} file is {got.split()[-1]}, this build reads v{VERSION}"
        )
    raise IngestionError(f"{path}: missing header {expected!r}, found {got[:60]!r}")


def write_rows(path: str | os.PathLike, kind: str, rows: Iterable[dict[str, Any]]) -> int:
    """Write header plus one compact JSON object per line; returns row count."""
    path = os.fspath(path)
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header_line(kind) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_rows(path: str | os.PathLike, kind: str) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, object) pairs; strict, raises on any bad line."""
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise IngestionError(f"{path}: empty file, expected a {kind} header")
        check_header(first, kind, path)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise IngestionError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj
