"""Shared domain types and the similarity primitive.

Everything here is immutable after construction and safe to share across
threads. Vectors are float64 numpy arrays with the writeable flag cleared;
no operation mutates its inputs.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-6


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Embedding:
    """A dense vector with finite entries; optionally flagged unit-norm."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 1:
            raise ValueError(f"embedding must be a non-empty 1-D vector, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("embedding contains non-finite values")
        if self.normalized:
            norm = float(np.linalg.norm(vals))
            if abs(norm - 1.0) > NORM_TOL:
                raise ValueError(f"embedding flagged normalized but has norm {norm!r}")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def __len__(self) -> int:
        return self.dim


class StopReason(enum.Enum):
    MAX_STEPS = "max_steps"
    CONVERGED = "converged"


@dataclass(frozen=True)
class Trajectory:
    """States produced by one refinement run; index 0 is the initial pass."""

    states: tuple[Embedding, ...]
    steps_executed: int
    stop_reason: StopReason

    def __post_init__(self) -> None:
        states = tuple(self.states)
        if not states:
            raise ValueError("trajectory needs at least the initial state")
        if self.steps_executed < 0 or len(states) != self.steps_executed + 1:
            raise ValueError(
                f"trajectory has {len(states)} states but steps_executed={self.steps_executed}"
            )
        dims = {s.dim for s in states}
        if len(dims) != 1:
            raise ValueError(f"trajectory states disagree on dim: {sorted(dims)}")
        object.__setattr__(self, "states", states)

    @property
    def final(self) -> Embedding:
        """The state used for similarity ranking."""
        return self.states[-1]

    @property
    def dim(self) -> int:
        return self.states[0].dim


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("document id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"document {self.id!r} has empty text")


@dataclass(frozen=True)
class Query:
    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("query id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"query {self.id!r} has empty text")


@dataclass(frozen=True)
class Qrels:
    """Graded relevance judgments. Absent (query, doc) pairs mean grade 0."""

    grades: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        frozen: dict[str, dict[str, int]] = {}
        for qid, docs in self.grades.items():
            row: dict[str, int] = {}
            for did, grade in docs.items():
                if int(grade) != grade or grade < 0:
                    raise ValueError(f"qrels grade for ({qid!r}, {did!r}) must be an int >= 0, got {grade!r}")
                row[did] = int(grade)
            frozen[qid] = row
        object.__setattr__(self, "grades", frozen)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str, int]]) -> "Qrels":
        grades: dict[str, dict[str, int]] = {}
        for qid, did, grade in pairs:
            row = grades.setdefault(qid, {})
            if did in row:
                raise ValueError(f"duplicate qrels pair ({qid!r}, {did!r})")
            row[did] = grade
        return cls(grades)

    def grade(self, query_id: str, doc_id: str) -> int:
        return self.grades.get(query_id, {}).get(doc_id, 0)

    def relevant(self, query_id: str) -> dict[str, int]:
        """Docs with grade > 0 for this query."""
        return {d: g for d, g in self.grades.get(query_id, {}).items() if g > 0}

    def is_judged(self, query_id: str) -> bool:
        return query_id in self.grades


@dataclass(frozen=True)
class RunList:
    """Per-query ranked (doc id, score) lists, scores non-increasing."""

    rankings: Mapping[str, tuple[tuple[str, float], ...]]

    def __post_init__(self) -> None:
        frozen: dict[str, tuple[tuple[str, float], ...]] = {}
        for qid, ranked in self.rankings.items():
            ranked = tuple((str(d), float(s)) for d, s in ranked)
            seen = {d for d, _ in ranked}
            if len(seen) != len(ranked):
                raise ValueError(f"run for query {qid!r} repeats a document id")
            for (_, hi), (_, lo) in zip(ranked, ranked[1:]):
                if lo > hi:
                    raise ValueError(f"run for query {qid!r} has increasing scores")
            frozen[qid] = ranked
        object.__setattr__(self, "rankings", frozen)

    def query_ids(self) -> list[str]:
        return list(self.rankings.keys())

    def for_query(self, query_id: str) -> tuple[tuple[str, float], ...]:
        return self.rankings.get(query_id, ())


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    """Cosine of the angle between two embeddings, in [-1, 1].

    Raises ValueError on dimension mismatch or a zero-norm input (a zero
    vector signals a degenerate embedding upstream).
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    na = float(np.linalg.norm(a.values))
    nb = float(np.linalg.norm(b.values))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm embedding")
    sim = float(np.dot(a.values, b.values) / (na * nb))
    # guard against rounding just outside the codomain
    return max(-1.0, min(1.0, sim))


def l2_normalize(a: Embedding) -> Embedding:
    """Rescale to unit L2 norm, preserving direction."""
    norm = float(np.linalg.norm(a.values))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return Embedding(a.values / norm, normalized=True)
