"""Embedding providers: the mock recipe, the JSONL store, validation."""

import importlib.util
import json
import math

import numpy as np
import pytest

from dsibib import (
    EmbeddingSet,
    MockEmbeddingProvider,
    OnnxEmbeddingProvider,
    PrecomputedEmbeddingProvider,
    load_precomputed,
    mock_sentence_vector,
    pool_tokens,
    save_precomputed,
)
from dsibib.errors import (
    DegenerateVectorError,
    DimensionMismatchError,
    LayerNotSupportedError,
    MissingEmbeddingError,
    ProviderUnavailableError,
    RecordError,
)
from dsibib.segmentation import SentenceList

MASK64 = (1 << 64) - 1


def reference_mock_vector(sentence: str, layer: int, dimension: int) -> list[float]:
    """Independent scalar reimplementation of the documented mock recipe."""
    h = 0xCBF29CE484222325
    for b in sentence.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK64
    state = h ^ ((layer * 0x9E3779B97F4A7C15) & MASK64)
    raw = []
    for _ in range(dimension):
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        z ^= z >> 31
        raw.append(z / 2.0**64 * 2.0 - 1.0)
    norm = math.sqrt(math.fsum(x * x for x in raw))
    return [x / norm for x in raw]


class TestMockVector:
    def test_frozen_value(self):
        got = mock_sentence_vector("abc", layer=6, dimension=4)
        expected = [
            0.1012680717013604,
            -0.6203610534339865,
            0.3789626889105922,
            0.6791790790725348,
        ]
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-15)

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            sentence = "".join(chr(int(c)) for c in rng.integers(32, 900, size=12))
            layer = int(rng.integers(0, 30))
            dim = int(rng.integers(2, 40))
            got = mock_sentence_vector(sentence, layer, dim)
            np.testing.assert_allclose(
                got, reference_mock_vector(sentence, layer, dim), rtol=0, atol=1e-15
            )

    def test_unit_norm(self):
        for i in range(20):
            v = mock_sentence_vector(f"sentence {i}", layer=i % 5, dimension=64)
            assert abs(np.linalg.norm(v) - 1.0) < 1e-12

    def test_deterministic_bitwise(self):
        a = mock_sentence_vector("hello world", 7, 96)
        b = mock_sentence_vector("hello world", 7, 96)
        assert np.array_equal(a, b)

    def test_one_character_change_moves_the_vector(self):
        base = mock_sentence_vector("semantic content", 6, 32)
        for i in range(len("semantic content")):
            s = list("semantic content")
            s[i] = "x" if s[i] != "x" else "y"
            assert not np.array_equal(mock_sentence_vector("".join(s), 6, 32), base)

    def test_no_collisions_over_a_thousand_strings(self):
        rng = np.random.default_rng(20240817)
        seen = set()
        for _ in range(1000):
            text = "".join(chr(int(c)) for c in rng.integers(97, 123, size=16))
            seen.add(mock_sentence_vector(text, 6, 8).tobytes())
        assert len(seen) == 1000

    def test_layers_decorrelate(self):
        a = mock_sentence_vector("same text", 6, 48)
        b = mock_sentence_vector("same text", 7, 48)
        assert not np.array_equal(a, b)

    def test_dimension_must_be_at_least_two(self):
        with pytest.raises(ValueError, match="dimension"):
            mock_sentence_vector("x", 6, 1)


class TestMockProvider:
    def test_shape_contract(self):
        provider = MockEmbeddingProvider(dimension=16)
        sentences = SentenceList(["one", "two", "three"], source_id="doc")
        es = provider.embed_sentences(sentences, layers=(6, 7))
        assert es.source_id == "doc"
        assert es.dimension == 16
        assert sorted(es.layers) == [6, 7]
        for matrix in es.layers.values():
            assert matrix.shape == (3, 16)

    def test_rows_equal_per_sentence_vectors(self):
        provider = MockEmbeddingProvider(dimension=12)
        sentences = SentenceList(["alpha", "beta"], source_id="x")
        es = provider.embed_sentences(sentences, layers=[7])
        for row, text in zip(es.layers[7], sentences):
            assert np.array_equal(row, mock_sentence_vector(text, 7, 12))

    def test_layer_set_deduplicated_and_sorted(self):
        provider = MockEmbeddingProvider(dimension=8)
        es = provider.embed_sentences(SentenceList(["a", "b", "c"]), layers=(7, 6, 7))
        assert sorted(es.layers) == [6, 7]

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            MockEmbeddingProvider(dimension=1)
        provider = MockEmbeddingProvider(dimension=8)
        with pytest.raises(ValueError, match="empty"):
            provider.embed_sentences(SentenceList([]), layers=(6,))
        with pytest.raises(ValueError, match="layer"):
            provider.embed_sentences(SentenceList(["a"]), layers=())


class TestEmbeddingSetValidation:
    def test_accepts_consistent_layers(self):
        es = EmbeddingSet("d", 3, {6: np.eye(3), 7: np.eye(3) * 2.0})
        assert es.n_sentences == 3

    def test_rejects_wrong_width(self):
        with pytest.raises(DimensionMismatchError, match="width"):
            EmbeddingSet("d", 4, {6: np.eye(3)})

    def test_rejects_count_disagreement(self):
        with pytest.raises(DimensionMismatchError, match="sentence count"):
            EmbeddingSet("d", 3, {6: np.eye(3), 7: np.ones((2, 3))})

    def test_rejects_non_2d(self):
        with pytest.raises(DimensionMismatchError, match="2-D"):
            EmbeddingSet("d", 3, {6: np.ones(3)})

    def test_rejects_zero_norm_row(self):
        bad = np.eye(3)
        bad[1] = 0.0
        with pytest.raises(DegenerateVectorError, match="sentence 1"):
            EmbeddingSet("d", 3, {6: bad})

    def test_rejects_empty_layers_and_bad_dimension(self):
        with pytest.raises(DimensionMismatchError):
            EmbeddingSet("d", 3, {})
        with pytest.raises(DimensionMismatchError):
            EmbeddingSet("d", 0, {6: np.eye(3)})


class TestPoolTokens:
    def test_mean_pooling(self):
        tokens = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 0.0]])
        np.testing.assert_allclose(pool_tokens(tokens), [3.0, 2.0])

    def test_rejects_empty_or_flat_input(self):
        with pytest.raises(ValueError):
            pool_tokens(np.empty((0, 4)))
        with pytest.raises(ValueError):
            pool_tokens(np.ones(4))


class TestPrecomputedStore:
    def _sets(self):
        provider = MockEmbeddingProvider(dimension=6)
        return [
            provider.embed_sentences(
                SentenceList([f"s{i}-{j}" for j in range(3)], source_id=f"doc-{i}"),
                layers=(6, 7),
            )
            for i in range(3)
        ]

    def test_save_load_round_trip_is_exact(self, tmp_path):
        path = tmp_path / "store.jsonl"
        sets = self._sets()
        save_precomputed(sets, path)
        loaded = load_precomputed(path)
        assert sorted(loaded) == [s.source_id for s in sets]
        for original in sets:
            for layer, matrix in original.layers.items():
                assert np.array_equal(loaded[original.source_id].layers[layer], matrix)

    def test_provider_passthrough(self, tmp_path):
        path = tmp_path / "store.jsonl"
        sets = self._sets()
        save_precomputed(sets, path)
        provider = PrecomputedEmbeddingProvider(path)
        sentences = SentenceList(["s1-0", "s1-1", "s1-2"], source_id="doc-1")
        es = provider.embed_sentences(sentences, layers=(6,))
        assert list(es.layers) == [6]
        assert np.array_equal(es.layers[6], sets[1].layers[6])

    def test_provider_accepts_in_memory_mapping(self):
        sets = {s.source_id: s for s in self._sets()}
        provider = PrecomputedEmbeddingProvider(sets)
        es = provider.embed_sentences(
            SentenceList(["s0-0", "s0-1", "s0-2"], source_id="doc-0"), layers=(6, 7)
        )
        assert es.n_sentences == 3

    def test_missing_document(self):
        provider = PrecomputedEmbeddingProvider({s.source_id: s for s in self._sets()})
        with pytest.raises(MissingEmbeddingError, match="doc-99"):
            provider.embed_sentences(SentenceList(["a"], source_id="doc-99"), layers=(6,))

    def test_missing_layer(self):
        provider = PrecomputedEmbeddingProvider({s.source_id: s for s in self._sets()})
        with pytest.raises(LayerNotSupportedError, match=r"\[11\]"):
            provider.embed_sentences(
                SentenceList(["a", "b", "c"], source_id="doc-0"), layers=(6, 11)
            )

    def test_sentence_count_mismatch(self):
        provider = PrecomputedEmbeddingProvider({s.source_id: s for s in self._sets()})
        with pytest.raises(DimensionMismatchError, match="segmentation produced 2"):
            provider.embed_sentences(SentenceList(["a", "b"], source_id="doc-0"), layers=(6,))

    def test_load_errors_name_path_and_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "dimension": 2, "layers": {"6": [[1.0, 0.0]]}}\nnot json\n')
        with pytest.raises(RecordError, match=r"bad\.jsonl:2"):
            load_precomputed(path)

    def test_load_rejects_duplicate_ids(self, tmp_path):
        line = json.dumps({"id": "a", "dimension": 2, "layers": {"6": [[1.0, 0.0]]}})
        path = tmp_path / "dup.jsonl"
        path.write_text(line + "\n" + line + "\n")
        with pytest.raises(RecordError, match="duplicate"):
            load_precomputed(path)

    def test_load_rejects_missing_keys_and_bad_shapes(self, tmp_path):
        path = tmp_path / "bad2.jsonl"
        path.write_text('{"id": "a", "layers": {"6": [[1.0]]}}\n')
        with pytest.raises(RecordError, match="dimension"):
            load_precomputed(path)
        path.write_text('{"id": "", "dimension": 2, "layers": {"6": [[1.0, 0.0]]}}\n')
        with pytest.raises(RecordError, match="nonempty"):
            load_precomputed(path)
        path.write_text('{"id": "a", "dimension": 2, "layers": {"6": [[0.0, 0.0]]}}\n')
        with pytest.raises(RecordError, match="zero-norm"):
            load_precomputed(path)


class TestOnnxProvider:
    def test_missing_model_file(self):
        with pytest.raises(ProviderUnavailableError, match="no/such/model.onnx"):
            OnnxEmbeddingProvider("no/such/model.onnx")

    def test_missing_runtime_reported_with_install_hint(self, tmp_path):
        if importlib.util.find_spec("onnxruntime") is not None:
            pytest.skip("onnxruntime installed; the unavailable path is not reachable")
        model = tmp_path / "model.onnx"
        model.write_bytes(b"\x00")
        with pytest.raises(ProviderUnavailableError, match="onnxruntime"):
            OnnxEmbeddingProvider(str(model))
