"""Iterative test-time refinement of text-embedding queries.

A query is re-encoded for a configurable number of steps, with pooled
embeddings of earlier passes injected back into the encoder input; the
final state of that trajectory ranks a fixed document index. The package
bundles a toy decoder-only encoder, a closed-form reference backend, a
remote-encoder wire protocol (client and mock server), retrieval and STS
metrics, and a sweep runner over step counts.
"""

from .backends import (
    AdditiveBackend,
    AdditiveRefParams,
    ClientRequestError,
    EncoderBackend,
    ProtocolError,
    RemoteBackend,
    ToyBackend,
    TransientEncodeError,
)
from .core import (
    Document,
    Embedding,
    Qrels,
    Query,
    RunList,
    StopReason,
    Trajectory,
    cosine_similarity,
    l2_normalize,
)
from .engine import BatchRefineError, RefineConfig, RefineStepError, refine, refine_batch
from .experiments import (
    ExperimentSpec,
    SweepResult,
    TwoHopFixture,
    emit_reports,
    load_corpus,
    load_qrels,
    load_queries,
    make_two_hop_fixture,
    run_sweep,
    write_fixture,
)
from .metrics import MetricReport, eval_sts, mrr, ndcg_at_k, recall_at_k, spearman
from .retrieval import CorpusIndex, build_index, load_index, save_index, search
from .server import MockEncodeServer
from .toy_encoder import (
    EncoderHyper,
    EncoderParams,
    HiddenStates,
    TokenSeq,
    forward,
    init_params,
    params_checksum,
    pool,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "AdditiveBackend",
    "AdditiveRefParams",
    "BatchRefineError",
    "ClientRequestError",
    "CorpusIndex",
    "Document",
    "Embedding",
    "EncoderBackend",
    "EncoderHyper",
    "EncoderParams",
    "ExperimentSpec",
    "HiddenStates",
    "MetricReport",
    "MockEncodeServer",
    "ProtocolError",
    "Qrels",
    "Query",
    "RefineConfig",
    "RefineStepError",
    "RemoteBackend",
    "RunList",
    "StopReason",
    "SweepResult",
    "TokenSeq",
    "ToyBackend",
    "Trajectory",
    "TransientEncodeError",
    "TwoHopFixture",
    "build_index",
    "cosine_similarity",
    "emit_reports",
    "eval_sts",
    "forward",
    "init_params",
    "l2_normalize",
    "load_corpus",
    "load_index",
    "load_qrels",
    "load_queries",
    "make_two_hop_fixture",
    "mrr",
    "ndcg_at_k",
    "params_checksum",
    "pool",
    "recall_at_k",
    "refine",
    "refine_batch",
    "run_sweep",
    "save_index",
    "search",
    "spearman",
    "tokenize",
    "write_fixture",
]
