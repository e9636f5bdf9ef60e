"""Binary container for id-keyed float32 vectors.

One fixed layout backs both the embedding cache and the search index;
only the id strings differ between the two uses. All integers are
little-endian:

    magic    4 bytes   b"CVEC"
    version  1 byte    currently 1
    reserved 3 bytes   zeros
    dim      u32       vector width
    count    u64       number of records that follow
    records  repeated  [id_len u16][id bytes utf-8][dim * f32]

The writer patches ``count`` on close, so a crash mid-write leaves a
count larger than the payload, which the reader reports as corruption.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import CorruptionError, FormatError, PersistenceError

MAGIC = b"CVEC"
VERSION = 1

_HEADER = struct.Struct("<4sB3xIQ")
_ID_LEN = struct.Struct("<H")
_COUNT_OFFSET = 12  # magic + version + reserved + dim


def _read_header(fh, path: str) -> tuple[int, int]:
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise CorruptionError(f"{path}: file shorter than the fixed header")
    magic, version, dim, count = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(
            f"{path}: container version {version} is not readable by this "
            f"build, which reads version {VERSION}"
        )
    return dim, count


class VectorWriter:
    """Appends id/vector records to a container file.

    Opens fresh by default; with ``append=True`` an existing file is
    extended after its header is validated. Use as a context manager so
    the record count in the header is always patched on exit.
    """

    def __init__(self, path: str | os.PathLike, dim: int, append: bool = False):
        self.path = os.fspath(path)
        self.dim = int(dim)
        self._count = 0
        try:
            if append and os.path.exists(self.path):
                with open(self.path, "rb") as fh:
                    file_dim, count = _read_header(fh, self.path)
                if file_dim != self.dim:
                    raise FormatError(
                        f"{self.path}: container is {file_dim}-dimensional, "
                        f"writer wants {self.dim}"
                    )
                self._count = count
                self._fh = open(self.path, "r+b")
                self._fh.seek(0, os.SEEK_END)
            else:
                self._fh = open(self.path, "wb")
                self._fh.write(_HEADER.pack(MAGIC, VERSION, self.dim, 0))
        except OSError as exc:
            raise PersistenceError(f"cannot open {self.path} for writing: {exc}") from exc

    def add(self, vec_id: str, vector: np.ndarray) -> None:
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector for {vec_id!r} has shape {vec.shape}, want ({self.dim},)")
        encoded = vec_id.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"id too long to store: {vec_id[:40]!r}...")
        try:
            self._fh.write(_ID_LEN.pack(len(encoded)))
            self._fh.write(encoded)
            self._fh.write(vec.tobytes())
        except OSError as exc:
            raise PersistenceError(f"write to {self.path} failed: {exc}") from exc
        self._count += 1

    def close(self) -> None:
        if self._fh.closed:
            return
        try:
            self._fh.seek(_COUNT_OFFSET)
            self._fh.write(struct.pack("<Q", self._count))
        except OSError as exc:
            raise PersistenceError(f"finalising {self.path} failed: {exc}") from exc
        finally:
            self._fh.close()

    def __enter__(self) -> "VectorWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def read_vectors(
    path: str | os.PathLike, expected_dim: int | None = None
) -> tuple[list[str], np.ndarray]:
    """Read a whole container; returns (ids, matrix of shape (n, dim)).

    Raises FormatError for magic/version/dimension mismatches and
    CorruptionError for truncated payloads or trailing garbage.
    """
    path = os.fspath(path)
    with open(path, "rb") as fh:
        dim, count = _read_header(fh, path)
        if expected_dim is not None and dim != expected_dim:
            raise FormatError(f"{path}: container is {dim}-dimensional, expected {expected_dim}")
        row_bytes = dim * 4
        ids: list[str] = []
        rows = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            ids.append(_read_id(fh, path, i))
            payload = fh.read(row_bytes)
            if len(payload) < row_bytes:
                raise CorruptionError(f"{path}: record {i} vector truncated")
            rows[i] = np.frombuffer(payload, dtype="<f4")
        if fh.read(1):
            raise CorruptionError(f"{path}: trailing bytes after {count} records")
    return ids, rows


def read_ids(path: str | os.PathLike) -> list[str]:
    """Read only the record ids, skipping vector payloads."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        dim, count = _read_header(fh, path)
        row_bytes = dim * 4
        ids = []
        for i in range(count):
            ids.append(_read_id(fh, path, i))
            fh.seek(row_bytes, os.SEEK_CUR)
        here = fh.tell()
        fh.seek(0, os.SEEK_END)
        if fh.tell() < here:
            raise CorruptionError(f"{path}: record {count - 1} vector truncated")
    return ids


def _read_id(fh, path: str, index: int) -> str:
    raw = fh.read(_ID_LEN.size)
    if len(raw) < _ID_LEN.size:
        raise CorruptionError(f"{path}: record {index} id length truncated")
    (id_len,) = _ID_LEN.unpack(raw)
    encoded = fh.read(id_len)
    if len(encoded) < id_len:
        raise CorruptionError(f"{path}: record {index} id truncated")
    try:
        return encoded.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptionError(f"{path}: record {index} id is not valid utf-8") from exc
