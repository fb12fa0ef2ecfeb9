"""Index a tiny corpus, search it, score the run, and save/reload the index.

Uses the toy transformer end to end: documents are embedded once with no
prefix states, the query is refined, and the ranked list feeds nDCG,
Recall, and MRR.
"""

import tempfile
from pathlib import Path

from rtembed import (
    Document,
    Qrels,
    Query,
    RefineConfig,
    RunList,
    ToyBackend,
    build_index,
    init_params,
    load_index,
    mrr,
    ndcg_at_k,
    recall_at_k,
    refine,
    save_index,
    search,
)

CORPUS = [
    Document("sort-1", "Quicksort", "divide and conquer partition exchange sort"),
    Document("sort-2", "Mergesort", "stable divide and conquer sort with extra memory"),
    Document("cook-1", "Risotto", "stir rice slowly with warm stock and butter"),
    Document("bird-1", "Swift", "a fast aerial bird that rarely lands"),
]

QUERIES = [Query("q-sort", "stable sort divide and conquer")]
QRELS = Qrels({"q-sort": {"sort-2": 2, "sort-1": 1}})


def main():
    backend = ToyBackend(init_params(seed=42))
    index = build_index(backend, CORPUS)
    print(f"indexed {len(index)} documents with {backend.name()}\n")

    rankings = {}
    for query in QUERIES:
        trajectory = refine(backend, query.text, RefineConfig(steps=2))
        ranked = search(index, trajectory.final, k=len(index))
        rankings[query.id] = tuple(ranked)
        print(f"{query.id}: {query.text!r}")
        for rank, (did, score) in enumerate(ranked, start=1):
            mark = "*" if QRELS.grade(query.id, did) > 0 else " "
            print(f"  {rank}. {mark} {did:<8} {score:+.4f}")

    run = RunList(rankings)
    print(f"\nndcg@2  = {ndcg_at_k(run, QRELS, 2).aggregate:.4f}")
    print(f"recall@2 = {recall_at_k(run, QRELS, 2).aggregate:.4f}")
    print(f"mrr      = {mrr(run, QRELS).aggregate:.4f}")

    path = Path(tempfile.mkdtemp(prefix="rtix-")) / "corpus.rtix"
    save_index(index, path)
    reloaded = load_index(path)
    print(f"\nindex round-trip: {len(reloaded)} rows from {path.name} "
          f"({path.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
