import struct

import numpy as np
import pytest

from rtembed import (
    CorpusIndex,
    Document,
    Embedding,
    build_index,
    cosine_similarity,
    load_index,
    save_index,
    search,
)
from rtembed.retrieval import IndexBuildError, joined_text

from conftest import additive_backend


def brute_force_ranking(index, query_values, k):
    """Independent oracle: definitional cosine per doc, full sort, id tie-break."""
    scored = []
    for i, did in enumerate(index.doc_ids):
        scored.append((did, cosine_similarity(Embedding(index.matrix[i]), Embedding(query_values))))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[: min(k, len(scored))]


def random_index(rng, n=50, dim=8):
    matrix = rng.normal(size=(n, dim))
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    ids = tuple(f"doc{i:03d}" for i in range(n))
    return CorpusIndex(ids, matrix)


class TestBuildIndex:
    def test_single_document(self):
        backend = additive_backend(dim=4)
        corpus = [Document("d1", "", "only text")]
        index = build_index(backend, corpus)
        assert len(index) == 1
        expected = backend.encode("only text", ())
        assert np.array_equal(index.matrix[0], expected.values)

    def test_title_join_convention(self):
        backend = additive_backend(dim=4)
        titled = Document("d1", "A Title", "body")
        untitled = Document("d2", "", "body")
        assert joined_text(titled) == "A Title\nbody"
        assert joined_text(untitled) == "body"
        index = build_index(backend, [titled, untitled])
        assert np.array_equal(index.matrix[0], backend.encode("A Title\nbody", ()).values)
        assert np.array_equal(index.matrix[1], backend.encode("body", ()).values)

    def test_duplicate_ids_rejected(self):
        backend = additive_backend(dim=4)
        corpus = [Document("d1", "", "x"), Document("d1", "", "y")]
        with pytest.raises(ValueError, match="d1"):
            build_index(backend, corpus)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            build_index(additive_backend(dim=4), [])

    def test_additive_rows_equal_base_embeddings(self):
        backend = additive_backend(dim=6, seed=9)
        corpus = [Document(f"d{i}", "", f"text {i}") for i in range(3)]
        index = build_index(backend, corpus)
        for i, doc in enumerate(corpus):
            assert np.array_equal(index.matrix[i], backend.encode(doc.text, ()).values)

    def test_encode_failures_collected(self, toy_backend):
        class Exploding:
            def encode(self, text, prefix_states=()):
                if "boom" in text:
                    raise RuntimeError("nope")
                return toy_backend.encode(text, prefix_states)

            def dim(self):
                return 32

            def name(self):
                return "exploding"

        corpus = [Document("ok", "", "fine"), Document("b1", "", "boom one"), Document("b2", "", "boom two")]
        with pytest.raises(IndexBuildError) as err:
            build_index(Exploding(), corpus)
        assert set(err.value.failures) == {"b1", "b2"}


class TestSearch:
    def test_self_retrieval(self, rng):
        index = random_index(rng, n=10, dim=8)
        query = Embedding(index.matrix[4].copy())
        top_id, top_score = search(index, query, k=1)[0]
        assert top_id == index.doc_ids[4]
        assert top_score == pytest.approx(1.0, abs=1e-9)

    def test_k_larger_than_corpus(self, rng):
        index = random_index(rng, n=5, dim=8)
        results = search(index, Embedding(rng.normal(size=8)), k=50)
        assert len(results) == 5

    def test_matches_brute_force_oracle(self, rng):
        for trial in range(20):
            index = random_index(rng, n=50, dim=8)
            for _ in range(20):
                q = rng.normal(size=8)
                ours = search(index, Embedding(q), k=10)
                oracle = brute_force_ranking(index, q, k=10)
                assert [d for d, _ in ours] == [d for d, _ in oracle]
                for (_, a), (_, b) in zip(ours, oracle):
                    assert a == pytest.approx(b, abs=1e-9)

    def test_tie_break_ascending_id(self):
        row = np.array([1.0, 0.0])
        matrix = np.vstack([row, row, row])
        index = CorpusIndex(("zz", "aa", "mm"), matrix)
        results = search(index, Embedding(np.array([1.0, 0.0])), k=3)
        assert [d for d, _ in results] == ["aa", "mm", "zz"]

    def test_permutation_invariance(self, rng):
        index = random_index(rng, n=20, dim=6)
        q = Embedding(rng.normal(size=6))
        baseline = search(index, q, k=20)
        perm = rng.permutation(20)
        shuffled = CorpusIndex(
            tuple(index.doc_ids[i] for i in perm), index.matrix[perm]
        )
        assert search(shuffled, q, k=20) == baseline

    def test_scores_equal_definitional_cosine(self, rng):
        index = random_index(rng, n=15, dim=5)
        q = rng.normal(size=5)
        for did, score in search(index, Embedding(q), k=15):
            row = index.matrix[index.doc_ids.index(did)]
            definitional = cosine_similarity(Embedding(row), Embedding(q))
            assert score == pytest.approx(definitional, abs=1e-9)

    def test_dim_mismatch(self, rng):
        index = random_index(rng, n=5, dim=8)
        with pytest.raises(ValueError):
            search(index, Embedding(np.ones(4)), k=1)

    def test_unit_row_validation(self):
        with pytest.raises(ValueError):
            CorpusIndex(("d1",), np.array([[2.0, 0.0]]))


class TestPersistence:
    def test_round_trip(self, rng, tmp_path):
        index = random_index(rng, n=7, dim=6)
        path = tmp_path / "test.rtix"
        save_index(index, path)
        loaded = load_index(path)
        assert loaded.doc_ids == index.doc_ids
        assert loaded.dim == index.dim
        # float32 storage: round-trip is exact at float32 resolution
        assert np.allclose(loaded.matrix, index.matrix, atol=1e-6)

    def test_byte_layout(self, rng, tmp_path):
        index = random_index(rng, n=2, dim=3)
        path = tmp_path / "layout.rtix"
        save_index(index, path)
        raw = path.read_bytes()
        assert raw[:4] == b"RTIX"
        version, dim, count = struct.unpack_from("<IIQ", raw, 4)
        assert (version, dim, count) == (1, 3, 2)
        offset = 20
        for expected_id in index.doc_ids:
            (length,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            assert raw[offset : offset + length].decode("utf-8") == expected_id
            offset += length
        floats = np.frombuffer(raw, dtype="<f4", offset=offset)
        assert floats.shape == (6,)
        assert np.allclose(floats.reshape(2, 3), index.matrix, atol=1e-6)
        assert offset + 24 == len(raw)

    def test_save_is_deterministic(self, rng, tmp_path):
        index = random_index(rng, n=4, dim=4)
        p1, p2 = tmp_path / "a.rtix", tmp_path / "b.rtix"
        save_index(index, p1)
        save_index(index, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.rtix"
        path.write_bytes(b"JUNK" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            load_index(path)
