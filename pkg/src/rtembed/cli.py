"""Command-line surface: rt {index, search, refine, eval, sweep, fixture}.

The sweep verb reads a TOML or JSON config file; individual flags override
config values. Remote backends read RT_ENDPOINT and RT_TOKEN from the
environment.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .backends import AdditiveBackend, AdditiveRefParams, EncoderBackend, RemoteBackend, ToyBackend
from .engine import RefineConfig, refine
from .experiments import (
    ENDPOINT_ENV,
    TOKEN_ENV,
    ExperimentSpec,
    additive_params_from_dict,
    emit_reports,
    load_corpus,
    load_qrels,
    load_queries,
    make_two_hop_fixture,
    run_sweep,
    write_fixture,
)
from .metrics import mrr, ndcg_at_k, recall_at_k
from .core import RunList
from .retrieval import build_index, load_index, save_index, search
from .toy_encoder import EncoderHyper, init_params


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["toy", "additive", "remote"], default="toy")
    parser.add_argument("--backend-seed", type=int, default=0, help="weight/hash seed")
    parser.add_argument("--dim", type=int, default=32, help="embedding dimension")
    parser.add_argument("--alpha", type=float, default=0.5, help="additive mixing weight")
    parser.add_argument(
        "--pool-scope",
        choices=["all_before_eos", "tokens_only"],
        default="all_before_eos",
        help="toy backend pooling scope",
    )
    parser.add_argument(
        "--backend-params",
        type=Path,
        default=None,
        help="JSON file with additive backend params (e.g. a fixture's backend.json)",
    )


def _make_backend(args: argparse.Namespace) -> EncoderBackend:
    if args.backend == "toy":
        hyper = EncoderHyper(dim=args.dim)
        return ToyBackend(init_params(args.backend_seed, hyper), pool_scope=args.pool_scope)
    if args.backend == "additive":
        if args.backend_params is not None:
            data = json.loads(args.backend_params.read_text(encoding="utf-8"))
            return AdditiveBackend(additive_params_from_dict(data))
        return AdditiveBackend(AdditiveRefParams(dim=args.dim, mix=args.alpha, seed=args.backend_seed))
    endpoint = os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise SystemExit(f"error: --backend remote requires {ENDPOINT_ENV} to be set")
    return RemoteBackend(endpoint, dim=args.dim, token=os.environ.get(TOKEN_ENV))


def _add_refine_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--steps", type=int, default=0, help="refinement iterations (0 = baseline)")
    parser.add_argument("--early-stop", action="store_true")
    parser.add_argument("--epsilon", type=float, default=1e-4)
    parser.add_argument("--state-window", default="all", help="'all' or an integer window")


def _refine_config(args: argparse.Namespace) -> RefineConfig:
    window = args.state_window
    if window != "all":
        window = int(window)
    return RefineConfig(
        steps=args.steps, early_stop=args.early_stop, epsilon=args.epsilon, state_window=window
    )


def _cmd_index(args: argparse.Namespace) -> int:
    backend = _make_backend(args)
    corpus = load_corpus(args.corpus)
    index = build_index(backend, corpus)
    save_index(index, args.out)
    print(f"indexed {len(index)} documents (dim={index.dim}) -> {args.out}")
    return 0


def _cmd_refine(args: argparse.Namespace) -> int:
    backend = _make_backend(args)
    trajectory = refine(backend, args.text, _refine_config(args))
    payload = {
        "steps_executed": trajectory.steps_executed,
        "stop_reason": trajectory.stop_reason.value,
        "states": [list(map(float, s.values)) for s in trajectory.states],
    }
    json.dump(payload, sys.stdout)
    print()
    return 0


def _cmd_search(args: argparse.Namespace) -> int:
    backend = _make_backend(args)
    index = load_index(args.index)
    trajectory = refine(backend, args.query, _refine_config(args))
    for rank, (did, score) in enumerate(search(index, trajectory.final, args.k), start=1):
        print(f"{rank}\t{did}\t{score:.6f}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    backend = _make_backend(args)
    corpus = load_corpus(args.corpus)
    queries = load_queries(args.queries)
    qrels = load_qrels(args.qrels)
    index = build_index(backend, corpus)
    cfg = _refine_config(args)
    rankings = {}
    for query in queries:
        trajectory = refine(backend, query.text, cfg)
        rankings[query.id] = tuple(search(index, trajectory.final, len(index)))
    run = RunList(rankings)
    ks = [int(k) for k in args.k.split(",")]
    for k in ks:
        print(f"ndcg@{k}\t{ndcg_at_k(run, qrels, k).aggregate:.4f}")
        print(f"recall@{k}\t{recall_at_k(run, qrels, k).aggregate:.4f}")
    print(f"mrr\t{mrr(run, qrels).aggregate:.4f}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    overrides: dict = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.steps_grid is not None:
        overrides["t_grid"] = tuple(int(t) for t in args.steps_grid.split(","))
    if args.state_window is not None:
        window = args.state_window
        overrides["state_window"] = window if window == "all" else int(window)
    if args.k is not None:
        overrides["k_values"] = tuple(int(k) for k in args.k.split(","))
    spec = ExperimentSpec.from_file(args.config, **overrides)
    result = run_sweep(spec)
    written = emit_reports(result, spec.out_dir)
    for t, message in sorted(result.failures.items()):
        print(f"T={t} failed: {message}", file=sys.stderr)
    print(f"wrote {len(written)} artifacts to {spec.out_dir}")
    for row in result.rows:
        k = "" if row.k is None else f"@{row.k}"
        print(f"T={row.t}\t{row.metric}{k}\t{row.value:.4f}")
    return 1 if result.failures else 0


def _cmd_fixture(args: argparse.Namespace) -> int:
    fixture = make_two_hop_fixture(args.n_queries, args.dim, args.seed)
    paths = write_fixture(fixture, args.out)
    print(f"fixture with {len(fixture.queries)} queries / {len(fixture.corpus)} docs -> {args.out}")
    print(f"run it with: rt sweep --config {paths['sweep']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rt", description="Iterative query-embedding refinement toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="encode a corpus and save the index")
    _add_backend_flags(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("refine", help="refine one query and print its trajectory as JSON")
    _add_backend_flags(p)
    _add_refine_flags(p)
    p.add_argument("--text", required=True)
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("search", help="refine a query and rank an existing index")
    _add_backend_flags(p)
    _add_refine_flags(p)
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("eval", help="evaluate one configuration on a dataset")
    _add_backend_flags(p)
    _add_refine_flags(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--qrels", type=Path, required=True)
    p.add_argument("--k", default="1,10", help="comma-separated cutoffs")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="run a T-grid experiment from a config file")
    p.add_argument("--config", type=Path, required=True, help="TOML or JSON sweep config")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps-grid", default=None, help="comma-separated T values")
    p.add_argument("--state-window", default=None)
    p.add_argument("--k", default=None, help="comma-separated cutoffs")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fixture", help="generate the two-hop forced-improvement dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-queries", type=int, default=50)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_fixture)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
