"""Retrieval and STS metrics.

Rank metrics (nDCG@k, Recall@k, MRR) depend only on the ranking, never on
raw score values. Gains in DCG are the raw relevance grades with a log2
discount. Queries that have no relevant document in the judgments (or no
judgments at all) are excluded from aggregation and listed on the report.

Spearman uses average ranks for ties, then Pearson on the ranks; STS
evaluation refines sentence A per the given config, encodes sentence B
plain, and correlates pairwise cosines with the gold scores.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .backends import EncoderBackend
from .core import Qrels, RunList, cosine_similarity
from .engine import RefineConfig, refine


@dataclass(frozen=True)
class MetricReport:
    metric: str
    k: int | None
    per_query: Mapping[str, float]
    excluded: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_query", dict(self.per_query))
        object.__setattr__(self, "excluded", tuple(self.excluded))

    @property
    def aggregate(self) -> float:
        """Arithmetic mean over evaluated queries; NaN when none qualified."""
        if not self.per_query:
            return float("nan")
        return float(np.mean(list(self.per_query.values())))


def _split_queries(run: RunList, qrels: Qrels) -> tuple[list[str], list[str]]:
    """Query ids to evaluate vs. ids excluded (unjudged or zero-relevant)."""
    evaluate, excluded = [], []
    for qid in run.query_ids():
        if qrels.is_judged(qid) and qrels.relevant(qid):
            evaluate.append(qid)
        else:
            excluded.append(qid)
    return evaluate, excluded


def ndcg_at_k(run: RunList, qrels: Qrels, k: int) -> MetricReport:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    evaluate, excluded = _split_queries(run, qrels)
    per_query = {}
    for qid in evaluate:
        ranked = run.for_query(qid)[:k]
        dcg = sum(qrels.grade(qid, did) / math.log2(i + 2) for i, (did, _) in enumerate(ranked))
        ideal = sorted(qrels.relevant(qid).values(), reverse=True)[:k]
        idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
        per_query[qid] = dcg / idcg
    return MetricReport("ndcg", k, per_query, tuple(excluded))


def recall_at_k(run: RunList, qrels: Qrels, k: int) -> MetricReport:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    evaluate, excluded = _split_queries(run, qrels)
    per_query = {}
    for qid in evaluate:
        relevant = qrels.relevant(qid)
        top = {did for did, _ in run.for_query(qid)[:k]}
        per_query[qid] = len(top & relevant.keys()) / len(relevant)
    return MetricReport("recall", k, per_query, tuple(excluded))


def mrr(run: RunList, qrels: Qrels) -> MetricReport:
    evaluate, excluded = _split_queries(run, qrels)
    per_query = {}
    for qid in evaluate:
        score = 0.0
        for rank, (did, _) in enumerate(run.for_query(qid), start=1):
            if qrels.grade(qid, did) > 0:
                score = 1.0 / rank
                break
        per_query[qid] = score
    return MetricReport("mrr", None, per_query, tuple(excluded))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank block."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(predicted: Sequence[float], gold: Sequence[float]) -> float:
    """Spearman rho with fractional ranks for ties."""
    pred = np.asarray(predicted, dtype=np.float64)
    true = np.asarray(gold, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError(f"length mismatch: {pred.shape} vs {true.shape}")
    if len(pred) < 2:
        raise ValueError("need at least 2 points for a rank correlation")
    if np.all(true == true[0]):
        raise ValueError("degenerate gold scores: all equal")
    if np.all(pred == pred[0]):
        raise ValueError("degenerate predictions: all equal")
    rp = _average_ranks(pred)
    rt = _average_ranks(true)
    rp = rp - rp.mean()
    rt = rt - rt.mean()
    return float(np.dot(rp, rt) / (np.linalg.norm(rp) * np.linalg.norm(rt)))


def eval_sts(
    backend: EncoderBackend,
    cfg: RefineConfig,
    pairs: Sequence[tuple[str, str, float]],
    refine_both: bool = False,
) -> float:
    """Spearman of pairwise cosines vs. gold scores.

    Sentence A plays the query role and is refined; sentence B is encoded
    plain unless refine_both is set (ablation).
    """
    if not pairs:
        raise ValueError("no sentence pairs given")
    predicted = []
    gold = []
    for text_a, text_b, score in pairs:
        emb_a = refine(backend, text_a, cfg).final
        if refine_both:
            emb_b = refine(backend, text_b, cfg).final
        else:
            emb_b = backend.encode(text_b, ())
        predicted.append(cosine_similarity(emb_a, emb_b))
        gold.append(float(score))
    return spearman(predicted, gold)
