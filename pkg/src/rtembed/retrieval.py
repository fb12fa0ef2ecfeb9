"""Exact in-memory dense retrieval.

Documents are encoded once with empty prefix states (never refined) and
ranked by cosine similarity against the query embedding. Scoring is exact
brute force; ties break by ascending doc id so runs are reproducible.

Index files are flat binary: magic ``RTIX``, version u32, dim u32,
count u64 (all little-endian), then each id as u32 byte length + UTF-8
bytes, then the row-major little-endian float32 embedding matrix.
"""

from __future__ import annotations

import struct
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import EncoderBackend
from .core import Document, Embedding, NORM_TOL

MAGIC = b"RTIX"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class CorpusIndex:
    doc_ids: tuple[str, ...]
    matrix: np.ndarray  # (n, dim), unit-norm rows aligned with doc_ids
    backend_name: str = ""

    def __post_init__(self) -> None:
        matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(self.doc_ids):
            raise ValueError(
                f"matrix shape {matrix.shape} does not match {len(self.doc_ids)} doc ids"
            )
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError("doc ids must be unique")
        norms = np.linalg.norm(matrix, axis=1)
        off = np.abs(norms - 1.0) > NORM_TOL
        if np.any(off):
            bad = [self.doc_ids[i] for i in np.nonzero(off)[0][:5]]
            raise ValueError(f"index rows must be unit-norm; offending ids: {bad}")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.doc_ids)


class IndexBuildError(RuntimeError):
    """One or more documents failed to encode."""

    def __init__(self, failures: dict[str, Exception]):
        ids = ", ".join(sorted(failures))
        super().__init__(f"failed to encode {len(failures)} documents: {ids}")
        self.failures = failures


def joined_text(doc: Document) -> str:
    """Title and body joined the way documents are embedded."""
    return f"{doc.title}\n{doc.text}" if doc.title else doc.text


def build_index(backend: EncoderBackend, corpus: Sequence[Document]) -> CorpusIndex:
    """Encode every document once, with no prefix states."""
    if not corpus:
        raise ValueError("corpus is empty")
    ids = [d.id for d in corpus]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate document ids: {dupes}")
    rows = []
    failures: dict[str, Exception] = {}
    for doc in corpus:
        try:
            rows.append(backend.encode(joined_text(doc), ()).values)
        except Exception as exc:
            failures[doc.id] = exc
    if failures:
        raise IndexBuildError(failures)
    return CorpusIndex(tuple(ids), np.vstack(rows), backend.name())


def search(index: CorpusIndex, query_emb: Embedding, k: int) -> list[tuple[str, float]]:
    """Top-min(k, corpus size) documents by cosine score, descending.

    Rows are unit-norm, so the score is the dot product with the
    normalized query. Ties break by ascending doc id.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if query_emb.dim != index.dim:
        raise ValueError(f"query dim {query_emb.dim} != index dim {index.dim}")
    qnorm = float(np.linalg.norm(query_emb.values))
    if qnorm == 0.0:
        raise ValueError("cannot search with a zero-norm query embedding")
    scores = index.matrix @ (query_emb.values / qnorm)
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.doc_ids[i]))
    return [(index.doc_ids[i], float(scores[i])) for i in order[: min(k, len(index))]]


def save_index(index: CorpusIndex, path: str | Path) -> None:
    path = Path(path)
    with path.open("wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIQ", FORMAT_VERSION, index.dim, len(index)))
        for doc_id in index.doc_ids:
            raw = doc_id.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
        f.write(np.ascontiguousarray(index.matrix, dtype="<f4").tobytes())


def load_index(path: str | Path) -> CorpusIndex:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path} is not an index file (bad magic)")
    version, dim, count = struct.unpack_from("<IIQ", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported index version {version}")
    offset = 4 + struct.calcsize("<IIQ")
    ids = []
    for _ in range(count):
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        ids.append(data[offset : offset + length].decode("utf-8"))
        offset += length
    expected = count * dim * 4
    if len(data) - offset != expected:
        raise ValueError(f"index payload is {len(data) - offset} bytes, expected {expected}")
    matrix = np.frombuffer(data, dtype="<f4", count=count * dim, offset=offset)
    matrix = matrix.reshape(count, dim).astype(np.float64)
    return CorpusIndex(tuple(ids), matrix)
