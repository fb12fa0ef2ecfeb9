import json

import numpy as np
import pytest

from rtembed import (
    AdditiveBackend,
    ExperimentSpec,
    build_index,
    emit_reports,
    load_corpus,
    load_qrels,
    load_queries,
    make_two_hop_fixture,
    ndcg_at_k,
    refine,
    run_sweep,
    search,
    write_fixture,
)
from rtembed.experiments import (
    DatasetFormatError,
    FixtureConstructionError,
    additive_params_from_dict,
    additive_params_to_dict,
    rotation_like_transition,
)


class TestLoaders:
    def test_corpus_round_trip(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text(
            '{"_id": "d1", "title": "T", "text": "first doc"}\n'
            '{"_id": "d2", "title": "", "text": "second doc"}\n'
        )
        docs = load_corpus(path)
        assert [(d.id, d.title, d.text) for d in docs] == [
            ("d1", "T", "first doc"),
            ("d2", "", "second doc"),
        ]

    def test_missing_id_names_the_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"_id": "d1", "text": "ok"}\n{"text": "no id"}\n')
        with pytest.raises(DatasetFormatError, match=":2"):
            load_corpus(path)

    def test_duplicate_doc_id_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"_id": "d1", "text": "a"}\n{"_id": "d1", "text": "b"}\n')
        with pytest.raises(DatasetFormatError, match="duplicate"):
            load_corpus(path)

    def test_invalid_json_names_the_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"_id": "d1", "text": "a"}\n{broken\n')
        with pytest.raises(DatasetFormatError, match=":2"):
            load_corpus(path)

    def test_ids_are_trimmed(self, tmp_path):
        path = tmp_path / "queries.jsonl"
        path.write_text('{"_id": "  q1  ", "text": "question"}\n')
        assert load_queries(path)[0].id == "q1"

    def test_qrels_parse(self, tmp_path):
        path = tmp_path / "qrels.tsv"
        path.write_text("q1\td9\t2\nq1\td3\t0\nq2\td9\t1\n")
        qrels = load_qrels(path)
        assert qrels.grade("q1", "d9") == 2
        assert qrels.grade("q1", "d3") == 0
        assert qrels.grade("q2", "d9") == 1

    def test_qrels_optional_header(self, tmp_path):
        path = tmp_path / "qrels.tsv"
        path.write_text("query-id\tcorpus-id\tscore\nq1\td1\t1\n")
        assert load_qrels(path).grade("q1", "d1") == 1

    def test_qrels_bad_grade_names_line(self, tmp_path):
        path = tmp_path / "qrels.tsv"
        path.write_text("q1\td1\t1\nq2\td2\tmany\n")
        with pytest.raises(DatasetFormatError, match=":2"):
            load_qrels(path)

    def test_qrels_wrong_column_count(self, tmp_path):
        path = tmp_path / "qrels.tsv"
        path.write_text("q1\td1\n")
        with pytest.raises(DatasetFormatError, match="3 tab-separated"):
            load_qrels(path)

    def test_qrels_duplicate_pair(self, tmp_path):
        path = tmp_path / "qrels.tsv"
        path.write_text("q1\td1\t1\nq1\td1\t2\n")
        with pytest.raises(DatasetFormatError, match="duplicate"):
            load_qrels(path)


class TestRotationTransition:
    def test_orthogonal_and_norm_preserving(self, rng):
        for dim in (4, 7, 16):
            m = rotation_like_transition(dim)
            assert np.allclose(m.T @ m, np.eye(dim))
            v = rng.normal(size=dim)
            assert np.linalg.norm(m @ v) == pytest.approx(np.linalg.norm(v))

    def test_even_dim_rotates_everything_orthogonally(self, rng):
        m = rotation_like_transition(8)
        v = rng.normal(size=8)
        assert abs(np.dot(m @ v, v)) < 1e-12


class TestTwoHopFixture:
    def test_shapes(self):
        fixture = make_two_hop_fixture(4, 8, seed=1)
        assert len(fixture.queries) == 4
        assert len(fixture.corpus) == 8
        assert fixture.backend_params.dim == 8
        assert fixture.state_window == 1

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            make_two_hop_fixture(0, 8)
        with pytest.raises(ValueError):
            make_two_hop_fixture(3, 2)

    def test_t0_ranks_distractor_first_t2_ranks_target_first(self):
        fixture = make_two_hop_fixture(10, 16, seed=5)
        backend = fixture.backend()
        index = build_index(backend, list(fixture.corpus))
        for i, query in enumerate(fixture.queries):
            t0 = refine(backend, query.text, fixture.refine_config(0)).final
            assert search(index, t0, 1)[0][0] == f"d{i}-distractor"
            t2 = refine(backend, query.text, fixture.refine_config(2)).final
            ranked = search(index, t2, 2)
            assert ranked[0][0] == f"d{i}-target"
            # construction margin: the runner-up is at least 0.1 behind
            assert ranked[0][1] - ranked[1][1] >= 0.1

    def test_two_hop_really_needs_two_hops(self):
        fixture = make_two_hop_fixture(10, 16, seed=5)
        backend = fixture.backend()
        index = build_index(backend, list(fixture.corpus))
        for i, query in enumerate(fixture.queries):
            t1 = refine(backend, query.text, fixture.refine_config(1)).final
            assert search(index, t1, 1)[0][0] != f"d{i}-target"

    def test_closed_form_hand_trace(self):
        # trace the window-1 recurrence by hand and check the planted goal direction
        fixture = make_two_hop_fixture(3, 8, seed=9)
        params = fixture.backend_params
        for i, query in enumerate(fixture.queries):
            e = params.base_overrides[query.text]
            h = e
            for _ in range(2):
                v = (1 - params.mix) * e + params.mix * (params.transition @ h)
                h = v / np.linalg.norm(v)
            goal_doc = next(d for d in fixture.corpus if d.id == f"d{i}-target")
            assert np.allclose(params.base_overrides[goal_doc.text], h, atol=1e-12)

    def test_params_json_round_trip(self):
        fixture = make_two_hop_fixture(2, 8, seed=3)
        data = json.loads(json.dumps(additive_params_to_dict(fixture.backend_params)))
        restored = additive_params_from_dict(data)
        assert restored.dim == fixture.backend_params.dim
        assert restored.mix == fixture.backend_params.mix
        assert np.array_equal(restored.transition, fixture.backend_params.transition)
        for text, vec in fixture.backend_params.base_overrides.items():
            assert np.array_equal(restored.base_overrides[text], vec)


def two_hop_spec(out_dir, n=6, dim=16, seed=2, **kwargs):
    defaults = dict(
        name="two-hop",
        out_dir=out_dir,
        seed=seed,
        fixture="two_hop",
        fixture_queries=n,
        fixture_dim=dim,
        t_grid=(0, 1, 2),
        metrics=("ndcg", "recall", "mrr"),
        k_values=(1, 10),
    )
    defaults.update(kwargs)
    return ExperimentSpec(**defaults)


class CountingBackend:
    def __init__(self, inner):
        self.inner = inner
        self.calls = []

    def encode(self, text, prefix_states=()):
        self.calls.append((text, len(prefix_states)))
        return self.inner.encode(text, prefix_states)

    def dim(self):
        return self.inner.dim()

    def name(self):
        return self.inner.name()


class TestRunSweep:
    def test_two_hop_forced_improvement(self, tmp_path):
        spec = two_hop_spec(tmp_path / "out", n=8)
        result = run_sweep(spec)
        assert not result.failures
        values = {(r.t, r.metric, r.k): r.value for r in result.rows}
        assert values[(0, "ndcg", 1)] == 0.0
        assert values[(1, "ndcg", 1)] == 0.0
        assert values[(2, "ndcg", 1)] == 1.0

    def test_t0_equals_no_refinement_pipeline(self, tmp_path):
        fixture = make_two_hop_fixture(5, 16, seed=4)
        backend = fixture.backend()
        spec = two_hop_spec(tmp_path / "out", n=5, dim=16, seed=4, t_grid=(0,))
        result = run_sweep(spec, backend=backend)

        index = build_index(backend, list(fixture.corpus))
        rankings = {
            q.id: tuple(search(index, backend.encode(q.text, ()), len(index)))
            for q in fixture.queries
        }
        from rtembed import RunList

        direct = ndcg_at_k(RunList(rankings), fixture.qrels, 1)
        swept = result.reports[(0, "ndcg", 1)]
        assert swept.per_query == direct.per_query

    def test_documents_encoded_exactly_once(self, tmp_path):
        fixture = make_two_hop_fixture(4, 16, seed=6)
        counting = CountingBackend(fixture.backend())
        spec = two_hop_spec(tmp_path / "out", n=4, dim=16, seed=6, t_grid=(0, 1, 2))
        run_sweep(spec, backend=counting)
        doc_texts = {d.text for d in fixture.corpus}
        doc_calls = [c for c in counting.calls if c[0] in doc_texts]
        assert len(doc_calls) == len(fixture.corpus)  # once per document, ever
        assert all(n_states == 0 for _, n_states in doc_calls)

    def test_grid_point_failure_does_not_stop_sweep(self, tmp_path):
        fixture = make_two_hop_fixture(3, 16, seed=7)

        class FailsAtTwoStates(CountingBackend):
            def encode(self, text, prefix_states=()):
                if len(prefix_states) == 1 and text in {q.text for q in fixture.queries}:
                    raise RuntimeError("grid point poisoned")
                return super().encode(text, prefix_states)

        spec = two_hop_spec(tmp_path / "out", n=3, dim=16, seed=7, t_grid=(0, 1, 2))
        result = run_sweep(spec, backend=FailsAtTwoStates(fixture.backend()))
        assert set(result.failures) == {1, 2}
        assert {r.t for r in result.rows} == {0}


class TestEmitReports:
    def test_file_set_and_formats(self, tmp_path):
        spec = two_hop_spec(tmp_path / "out", n=3)
        result = run_sweep(spec)
        written = emit_reports(result, spec.out_dir)

        results_csv = written["results"].read_text().splitlines()
        assert results_csv[0] == "dataset,backend,T,metric,k,value,ms"
        # one row per (T, metric, k) grid point: 3 T x (ndcg@2k + recall@2k + mrr)
        assert len(results_csv) == 1 + 3 * 5

        run_file = written["run_T0"].read_text().splitlines()
        first = run_file[0].split(" ")
        assert len(first) == 6
        assert first[1] == "Q0" and first[3] == "1" and first[5] == "rt-sweep"
        float(first[4])

        figure = written["figure_data"].read_text().splitlines()
        assert figure[0] == "dataset,metric,k,T,value"
        assert len(figure) == 1 + 3 * 5

        assert written["summary"].read_text().startswith("# Sweep summary")
        assert written["index"].exists() and written["timings"].exists()

    def test_reemission_is_byte_identical(self, tmp_path):
        spec = two_hop_spec(tmp_path / "out", n=3)
        result = run_sweep(spec)
        a = emit_reports(result, tmp_path / "a")
        b = emit_reports(result, tmp_path / "b")
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes(), key

    def test_two_runs_same_seed_byte_identical(self, tmp_path):
        spec1 = two_hop_spec(tmp_path / "r1", n=4)
        spec2 = two_hop_spec(tmp_path / "r2", n=4)
        w1 = emit_reports(run_sweep(spec1), tmp_path / "r1")
        w2 = emit_reports(run_sweep(spec2), tmp_path / "r2")
        for key in w1:
            if key == "timings":
                continue  # real wall clock, informational only
            assert w1[key].read_bytes() == w2[key].read_bytes(), key

    def test_trec_line_golden_format(self, tmp_path):
        from rtembed import RunList
        from rtembed.experiments import SweepResult, SweepRow
        from rtembed.retrieval import CorpusIndex

        run = RunList({"q1": (("d9", 0.91324),)})
        index = CorpusIndex(("d9",), np.array([[1.0, 0.0]]))
        result = SweepResult(
            dataset="x",
            backend="b",
            rows=(SweepRow("x", "b", 0, "ndcg", 1, 1.0, "run_T0.trec", 1.0),),
            runs={0: run},
            reports={},
            index=index,
            timings_ms={0: 1.0},
        )
        written = emit_reports(result, tmp_path)
        assert written["run_T0"].read_text() == "q1 Q0 d9 1 0.9132 rt-sweep\n"


class TestWriteFixtureAndSpecFile:
    def test_round_trip_through_files(self, tmp_path):
        fixture = make_two_hop_fixture(3, 8, seed=11)
        paths = write_fixture(fixture, tmp_path / "fx")

        corpus = load_corpus(paths["corpus"])
        queries = load_queries(paths["queries"])
        qrels = load_qrels(paths["qrels"])
        assert len(corpus) == 6 and len(queries) == 3
        assert qrels.grade("q0", "d0-target") == 1

        params = additive_params_from_dict(json.loads(paths["backend"].read_text()))
        file_backend = AdditiveBackend(params)
        mem_backend = fixture.backend()
        for q in queries:
            assert np.array_equal(
                file_backend.encode(q.text, ()).values, mem_backend.encode(q.text, ()).values
            )

    def test_sweep_config_json_loads(self, tmp_path):
        fixture = make_two_hop_fixture(2, 8, seed=12)
        paths = write_fixture(fixture, tmp_path / "fx")
        spec = ExperimentSpec.from_file(paths["sweep"])
        assert spec.t_grid == (0, 1, 2)
        assert spec.state_window == 1
        assert spec.backend == "additive"
        result = run_sweep(spec)
        values = {(r.t, r.metric, r.k): r.value for r in result.rows}
        assert values[(0, "ndcg", 1)] == 0.0
        assert values[(2, "ndcg", 1)] == 1.0

    def test_toml_config(self, tmp_path):
        corpus = tmp_path / "c.jsonl"
        queries = tmp_path / "q.jsonl"
        qrels = tmp_path / "r.tsv"
        corpus.write_text('{"_id": "d1", "text": "alpha"}\n{"_id": "d2", "text": "beta"}\n')
        queries.write_text('{"_id": "q1", "text": "alpha"}\n')
        qrels.write_text("q1\td1\t1\n")
        cfg = tmp_path / "sweep.toml"
        cfg.write_text(
            f"""
name = "toml-test"
out_dir = "{tmp_path / 'out'}"
seed = 5

[dataset]
corpus = "{corpus}"
queries = "{queries}"
qrels = "{qrels}"

[backend]
kind = "additive"
dim = 8
seed = 5

[refine]
t_grid = [0, 1]
early_stop = false

[eval]
metrics = ["ndcg", "mrr"]
k = [1]
"""
        )
        spec = ExperimentSpec.from_file(cfg)
        assert spec.name == "toml-test"
        assert spec.t_grid == (0, 1)
        assert spec.backend_dim == 8
        result = run_sweep(spec)
        assert not result.failures
        assert {r.metric for r in result.rows} == {"ndcg", "mrr"}

    def test_spec_validation(self, tmp_path):
        with pytest.raises(ValueError, match="t_grid"):
            two_hop_spec(tmp_path, t_grid=())
        with pytest.raises(ValueError, match="fixture"):
            ExperimentSpec(name="x", out_dir=tmp_path)
        with pytest.raises(ValueError, match="metrics"):
            two_hop_spec(tmp_path, metrics=("bleu",))
