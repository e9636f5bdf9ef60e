"""Sentence embedding backends and corpus embedding with a cache.

All backends map text to 768-dimensional unit vectors (float32). Three
are provided:

* portable: a traced TorchScript graph with mean pooling plus its
  tokenizer, loaded from an exported model directory,
* remote: an HTTP service that embeds batches of texts,
* deterministic: a seeded hash-based stand-in for tests and offline
  pipelines. No model involved; the vector for a text is the text's
  SHA-256 digest fed through numpy's default generator.

The deterministic recipe, exactly: take the 8-byte little-endian seed,
append SHA-256(utf-8 text), SHA-256 the concatenation, interpret the
digest as a big-endian integer, seed ``numpy.random.default_rng`` with
it, draw ``standard_normal(768)``, L2-normalize, cast to float32. Any
implementation following these steps reproduces the vectors bit-exactly.
"""

from __future__ import annotations

import hashlib
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import vecstore
from .errors import (
    CvelinkError,
    InputError,
    ModelLoadError,
    TransportError,
)
from .textprep import normalize

log = logging.getLogger(__name__)

DIM = 768
UNIT_TOLERANCE = 1e-6

MANIFEST_NAME = "manifest.json"
MODEL_FILE = "model.pt"
TOKENIZER_FILE = "tokenizer.json"
PORTABLE_FORMAT = "torchscript-mean-pool"


def _unit_rows(matrix: np.ndarray, err: type[CvelinkError], context: str) -> np.ndarray:
    mat = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms < 1e-12) or not np.all(np.isfinite(mat)):
        raise err(f"{context}: vector has no usable direction (zero or non-finite)")
    return (mat / norms[:, None]).astype(np.float32)


class Backend:
    """Interface all embedding backends implement."""

    kind = "abstract"

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        """Embed a batch; returns (len(texts), DIM) float32 with unit rows."""
        raise NotImplementedError

    def encode_with_flags(self, texts: Sequence[str]) -> tuple[np.ndarray, list[bool]]:
        """Like encode, plus a per-text flag set when input was truncated."""
        return self.encode(texts), [False] * len(texts)


class DeterministicBackend(Backend):
    """Hash-seeded random unit vectors; equal texts get equal vectors."""

    kind = "deterministic"

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._seed_bytes = self.seed.to_bytes(8, "little", signed=False)

    def _vector(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(
            self._seed_bytes + hashlib.sha256(text.encode("utf-8")).digest()
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "big"))
        vec = rng.standard_normal(DIM)
        return (vec / np.linalg.norm(vec)).astype(np.float32)

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.empty((0, DIM), dtype=np.float32)
        return np.stack([self._vector(t) for t in texts])


class RemoteBackend(Backend):
    """Client for an HTTP embedding service.

    The service accepts ``POST {"texts": [...]}`` and answers
    ``{"vectors": [[...], ...]}``. Responses are re-normalized here so a
    sloppy service cannot leak non-unit vectors into the pipeline.
    """

    kind = "remote"

    def __init__(self, url: str, timeout: float = 30.0, retries: int = 2):
        import requests

        self.url = url
        self.timeout = timeout
        self.retries = retries
        self._session = requests.Session()
        self._requests = requests

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.empty((0, DIM), dtype=np.float32)
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(0.2 * attempt)
            try:
                resp = self._session.post(
                    self.url, json={"texts": list(texts)}, timeout=self.timeout
                )
                if resp.status_code != 200:
                    raise TransportError(
                        f"embedding service answered HTTP {resp.status_code}"
                    )
                payload = resp.json()
            except TransportError as exc:
                last = exc
                continue
            except (self._requests.RequestException, ValueError) as exc:
                last = exc
                continue
            return self._validate(payload, len(texts))
        raise TransportError(
            f"embedding request failed after {self.retries + 1} attempts ({last}); "
            f"check that the service at {self.url} is up and reachable"
        )

    def _validate(self, payload: object, n: int) -> np.ndarray:
        vectors = payload.get("vectors") if isinstance(payload, dict) else None
        if not isinstance(vectors, list) or len(vectors) != n:
            raise TransportError(
                f"embedding service reply lacks a {n}-row 'vectors' field"
            )
        try:
            mat = np.asarray(vectors, dtype=np.float64)
        except ValueError as exc:
            raise TransportError(f"embedding service reply is ragged: {exc}") from exc
        if mat.shape != (n, DIM):
            raise TransportError(
                f"embedding service returned shape {mat.shape}, expected ({n}, {DIM})"
            )
        return _unit_rows(mat, TransportError, "embedding service reply")


class PortableBackend(Backend):
    """Runs an exported model directory: traced graph + tokenizer + manifest."""

    kind = "portable"

    def __init__(self, model_dir: str | os.PathLike, batch_size: int = 32):
        self.model_dir = os.fspath(model_dir)
        self.batch_size = batch_size
        try:
            import torch
            from tokenizers import Tokenizer
        except ImportError as exc:
            raise ModelLoadError(
                "portable backend needs torch and tokenizers; install the "
                "'portable' extra"
            ) from exc
        self._torch = torch
        manifest_path = os.path.join(self.model_dir, MANIFEST_NAME)
        model_path = os.path.join(self.model_dir, MODEL_FILE)
        tokenizer_path = os.path.join(self.model_dir, TOKENIZER_FILE)
        missing = [p for p in (manifest_path, model_path, tokenizer_path)
                   if not os.path.exists(p)]
        if missing:
            raise ModelLoadError(f"{self.model_dir}: missing {', '.join(sorted(missing))}")
        import json

        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("format") != PORTABLE_FORMAT:
            raise ModelLoadError(
                f"{manifest_path}: format {manifest.get('format')!r}, "
                f"this build runs {PORTABLE_FORMAT!r}"
            )
        if manifest.get("dim") != DIM:
            raise ModelLoadError(
                f"{manifest_path}: model dim {manifest.get('dim')}, need {DIM}"
            )
        self.max_seq_length = int(manifest.get("max_seq_length", 128))
        pad_token = manifest.get("pad_token", "[PAD]")
        try:
            self._model = torch.jit.load(model_path, map_location="cpu")
        except Exception as exc:  # torch raises several unrelated types here
            raise ModelLoadError(f"{model_path}: cannot load graph: {exc}") from exc
        self._model.eval()
        self._tokenizer = Tokenizer.from_file(tokenizer_path)
        pad_id = self._tokenizer.token_to_id(pad_token)
        if pad_id is None:
            raise ModelLoadError(f"{tokenizer_path}: pad token {pad_token!r} unknown")
        self._tokenizer.enable_truncation(max_length=self.max_seq_length)
        self._tokenizer.enable_padding(
            length=self.max_seq_length, pad_id=pad_id, pad_token=pad_token
        )

    def encode_with_flags(self, texts: Sequence[str]) -> tuple[np.ndarray, list[bool]]:
        if not texts:
            return np.empty((0, DIM), dtype=np.float32), []
        torch = self._torch
        chunks: list[np.ndarray] = []
        flags: list[bool] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start:start + self.batch_size])
            encodings = self._tokenizer.encode_batch(batch)
            flags.extend(bool(e.overflowing) for e in encodings)
            ids = torch.tensor([e.ids for e in encodings], dtype=torch.long)
            mask = torch.tensor([e.attention_mask for e in encodings], dtype=torch.long)
            with torch.no_grad():
                out = self._model(ids, mask)
            arr = out.cpu().numpy()
            if arr.ndim != 2 or arr.shape[1] != DIM:
                raise ModelLoadError(
                    f"{self.model_dir}: graph produced shape {arr.shape}, "
                    f"expected (*, {DIM})"
                )
            chunks.append(arr)
        matrix = _unit_rows(np.concatenate(chunks), ModelLoadError, self.model_dir)
        return matrix, flags

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        return self.encode_with_flags(texts)[0]


def make_backend(
    kind: str,
    seed: int = 0,
    url: str | None = None,
    model_dir: str | None = None,
    timeout: float = 30.0,
    retries: int = 2,
) -> Backend:
    """Build a backend from CLI-ish settings; unknown kinds raise InputError."""
    if kind == "deterministic":
        return DeterministicBackend(seed=seed)
    if kind == "remote":
        if not url:
            raise InputError("remote backend needs a service url")
        return RemoteBackend(url, timeout=timeout, retries=retries)
    if kind == "portable":
        if not model_dir:
            raise InputError("portable backend needs a model directory")
        return PortableBackend(model_dir)
    raise InputError(f"unknown backend {kind!r}; pick deterministic, remote, or portable")


def embed(backend: Backend, text: str) -> np.ndarray:
    """Embed one cleaned text; raises InputError on blank input."""
    if not text or not text.strip():
        raise InputError("cannot embed empty text")
    vec = backend.encode([text])[0]
    norm = float(np.linalg.norm(vec.astype(np.float64)))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise CvelinkError(
            f"{backend.kind} backend produced a vector with norm {norm!r}"
        )
    return vec


def cache_key(entry_id: str, cleaned_text: str) -> str:
    """Cache record id: entry id plus a digest of the cleaned text.

    Re-embedding after a description change misses the old key, so stale
    vectors are never reused; unchanged records hit and are skipped.
    """
    digest = hashlib.sha256(cleaned_text.encode("utf-8")).hexdigest()[:16]
    return f"{entry_id}@{digest}"


@dataclass
class CorpusEmbedReport:
    """What happened during an embed_corpus run."""

    embedded: int = 0
    reused: int = 0
    failed: list[tuple[str, str]] = field(default_factory=list)
    truncated: list[str] = field(default_factory=list)


def embed_corpus(
    backend: Backend,
    records: Iterable,
    cache_path: str | os.PathLike,
    batch_size: int = 32,
) -> CorpusEmbedReport:
    """Embed every record description into the cache, skipping known keys.

    ``records`` need ``cve_id`` and ``description`` attributes. A record
    that fails (blank after cleaning, backend refusal) is recorded in
    the report and the run continues.
    """
    report = CorpusEmbedReport()
    cache_path = os.fspath(cache_path)
    existing: set[str] = set()
    if os.path.exists(cache_path):
        existing = set(vecstore.read_ids(cache_path))

    todo: list[tuple[str, str, str]] = []  # (key, text, record id)
    scheduled: set[str] = set()
    for rec in records:
        text = normalize(rec.description)
        if not text:
            report.failed.append((rec.cve_id, "description empty after cleaning"))
            continue
        key = cache_key(rec.cve_id, text)
        if key in existing or key in scheduled:
            report.reused += 1
            continue
        scheduled.add(key)
        todo.append((key, text, rec.cve_id))

    if not todo:
        return report

    with vecstore.VectorWriter(cache_path, DIM, append=True) as writer:
        for start in range(0, len(todo), batch_size):
            batch = todo[start:start + batch_size]
            try:
                matrix, flags = backend.encode_with_flags([t for _, t, _ in batch])
            except CvelinkError:
                matrix = None
                flags = []
            if matrix is not None:
                for (key, _, rid), row, flag in zip(batch, matrix, flags):
                    writer.add(key, row)
                    report.embedded += 1
                    if flag:
                        report.truncated.append(rid)
                continue
            # The batch failed wholesale; try records one at a time so a
            # single poison input cannot sink its neighbours.
            for key, text, rid in batch:
                try:
                    row, flag = backend.encode_with_flags([text])
                except CvelinkError as exc:
                    report.failed.append((rid, str(exc)))
                    continue
                writer.add(key, row[0])
                report.embedded += 1
                if flag[0]:
                    report.truncated.append(rid)
    return report


def load_cached_vectors(
    cache_path: str | os.PathLike, records: Iterable
) -> tuple[list[str], np.ndarray]:
    """Collect current vectors for ``records`` from the cache.

    Returns ids (sorted) and the aligned matrix. Records whose current
    cache key is absent raise InputError telling the caller to embed
    first.
    """
    ids, matrix = vecstore.read_vectors(cache_path, expected_dim=DIM)
    by_key = {key: i for i, key in enumerate(ids)}
    wanted: dict[str, str] = {}
    missing: list[str] = []
    for rec in records:
        text = normalize(rec.description)
        if not text:
            continue
        key = cache_key(rec.cve_id, text)
        if key in by_key:
            wanted[rec.cve_id] = key
        else:
            missing.append(rec.cve_id)
    if missing:
        shown = ", ".join(missing[:5])
        more = f" (+{len(missing) - 5} more)" if len(missing) > 5 else ""
        raise InputError(
            f"{cache_path}: no cached vector for {shown}{more}; embed the corpus first"
        )
    out_ids = sorted(wanted)
    rows = np.stack([matrix[by_key[wanted[i]]] for i in out_ids]) if out_ids else (
        np.empty((0, DIM), dtype=np.float32)
    )
    return out_ids, rows
