"""Sentence embedding providers.

Three interchangeable backends sit behind :class:`EmbeddingProvider`:

* :class:`MockEmbeddingProvider` - deterministic content-hashed unit vectors,
  the default for tests and benchmarks. The recipe is fixed: seed a
  splitmix64 stream with ``fnv1a_64(utf8(sentence)) XOR (layer * GOLDEN_GAMMA
  mod 2^64)``, draw ``dimension`` values ``u``, map each to ``2*(u/2^64) - 1``
  and normalise the vector to unit Euclidean norm.
* :class:`PrecomputedEmbeddingProvider` - serves vectors from a JSONL store
  (see :func:`load_precomputed` for the schema).
* :class:`OnnxEmbeddingProvider` - optional real-model backend; requires
  ``onnxruntime`` and ``transformers`` at call time and is never needed by
  the test suite.
"""

from __future__ import annotations

import json
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    DegenerateVectorError,
    DimensionMismatchError,
    LayerNotSupportedError,
    MissingEmbeddingError,
    ProviderUnavailableError,
    RecordError,
)
from .rng import GOLDEN_GAMMA, MASK64, fnv1a_64, splitmix64_fill
from .segmentation import SentenceList


@dataclass
class EmbeddingSet:
    """Per-layer sentence embeddings for one document.

    ``layers`` maps an integer layer id to a float64 array of shape
    ``(n_sentences, dimension)``. All layers must agree on both dimensions
    and every row must have positive norm.
    """

    source_id: str
    dimension: int
    layers: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 1:
            raise DimensionMismatchError(f"dimension must be >= 1, got {self.dimension}")
        if not self.layers:
            raise DimensionMismatchError("EmbeddingSet requires at least one layer")
        counts = set()
        normalized = {}
        for layer_id, matrix in self.layers.items():
            arr = np.asarray(matrix, dtype=np.float64)
            if arr.ndim != 2:
                raise DimensionMismatchError(
                    f"layer {layer_id}: expected a 2-D array, got ndim={arr.ndim}"
                )
            if arr.shape[1] != self.dimension:
                raise DimensionMismatchError(
                    f"layer {layer_id}: width {arr.shape[1]} != dimension {self.dimension}"
                )
            norms = np.linalg.norm(arr, axis=1)
            if np.any(norms == 0.0):
                row = int(np.flatnonzero(norms == 0.0)[0])
                raise DegenerateVectorError(
                    f"layer {layer_id}, sentence {row}: zero-norm embedding"
                )
            counts.add(arr.shape[0])
            normalized[int(layer_id)] = arr
        if len(counts) > 1:
            raise DimensionMismatchError(
                f"layers disagree on sentence count: {sorted(counts)}"
            )
        self.layers = normalized

    @property
    def n_sentences(self) -> int:
        return next(iter(self.layers.values())).shape[0]


def pool_tokens(token_vectors: np.ndarray) -> np.ndarray:
    """Mean-pool token vectors (rows) into a single sentence vector."""
    arr = np.asarray(token_vectors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("pool_tokens expects a nonempty (tokens, dim) array")
    return arr.mean(axis=0)


def mock_sentence_vector(sentence: str, layer: int, dimension: int) -> np.ndarray:
    """Deterministic unit vector for one (sentence, layer) pair.

    See the module docstring for the exact recipe. Raises
    :class:`DegenerateVectorError` on the (astronomically unlikely) all-zero
    draw so the contract stays total.
    """
    if dimension < 2:
        raise ValueError(f"dimension must be >= 2, got {dimension}")
    base = fnv1a_64(sentence.encode("utf-8"))
    return _mock_vector_from_base(base, layer, dimension)


def _mock_vector_from_base(base_hash: int, layer: int, dimension: int) -> np.ndarray:
    seed = base_hash ^ ((layer * GOLDEN_GAMMA) & MASK64)
    draws = splitmix64_fill(seed, dimension)
    raw = draws.astype(np.float64) * 2.0**-64 * 2.0 - 1.0
    norm = float(np.linalg.norm(raw))
    if norm == 0.0:
        raise DegenerateVectorError("mock draw produced a zero vector")
    return raw / norm


class EmbeddingProvider(ABC):
    """Contract: sentences in, per-layer embedding matrices out."""

    @abstractmethod
    def embed_sentences(self, sentences: SentenceList, layers: Iterable[int]) -> EmbeddingSet:
        """Return an :class:`EmbeddingSet` covering every requested layer."""


def _checked_layers(layers: Iterable[int]) -> list[int]:
    out = sorted({int(l) for l in layers})
    if not out:
        raise ValueError("at least one layer is required")
    return out


class MockEmbeddingProvider(EmbeddingProvider):
    """Content-hashed deterministic embeddings; supports any layer id."""

    def __init__(self, dimension: int = 768):
        if dimension < 2:
            raise ValueError(f"dimension must be >= 2, got {dimension}")
        self.dimension = int(dimension)

    def embed_sentences(self, sentences: SentenceList, layers: Iterable[int]) -> EmbeddingSet:
        layer_ids = _checked_layers(layers)
        if len(sentences) == 0:
            raise ValueError("cannot embed an empty sentence list")
        bases = [fnv1a_64(s.encode("utf-8")) for s in sentences]
        matrices = {
            layer: np.vstack(
                [_mock_vector_from_base(b, layer, self.dimension) for b in bases]
            )
            for layer in layer_ids
        }
        return EmbeddingSet(
            source_id=sentences.source_id, dimension=self.dimension, layers=matrices
        )


class PrecomputedEmbeddingProvider(EmbeddingProvider):
    """Serves embeddings stored per document id.

    Accepts either a path to a JSONL store or an in-memory mapping of
    ``id -> EmbeddingSet``.
    """

    def __init__(self, source: str | os.PathLike | Mapping[str, EmbeddingSet]):
        if isinstance(source, (str, os.PathLike)):
            self._sets = load_precomputed(source)
        else:
            self._sets = dict(source)

    def embed_sentences(self, sentences: SentenceList, layers: Iterable[int]) -> EmbeddingSet:
        layer_ids = _checked_layers(layers)
        stored = self._sets.get(sentences.source_id)
        if stored is None:
            raise MissingEmbeddingError(
                f"no precomputed embeddings for document id {sentences.source_id!r}"
            )
        missing = [l for l in layer_ids if l not in stored.layers]
        if missing:
            raise LayerNotSupportedError(
                f"document {sentences.source_id!r}: layers {missing} not in store "
                f"(has {sorted(stored.layers)})"
            )
        if len(sentences) != stored.n_sentences:
            raise DimensionMismatchError(
                f"document {sentences.source_id!r}: store has {stored.n_sentences} "
                f"sentences, segmentation produced {len(sentences)}"
            )
        return EmbeddingSet(
            source_id=stored.source_id,
            dimension=stored.dimension,
            layers={l: stored.layers[l] for l in layer_ids},
        )


def save_precomputed(sets: Iterable[EmbeddingSet], path: str | os.PathLike) -> None:
    """Write embedding sets as JSONL, one document per line.

    Schema per line: ``{"id": str, "dimension": int, "layers": {"<layer>":
    [[float, ...], ...]}}``. Floats are serialised with shortest round-trip
    precision, so a write-then-read is the identity.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for es in sets:
            record = {
                "id": es.source_id,
                "dimension": es.dimension,
                "layers": {
                    str(layer): [[float(x) for x in row] for row in matrix]
                    for layer, matrix in sorted(es.layers.items())
                },
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_precomputed(path: str | os.PathLike) -> dict[str, EmbeddingSet]:
    """Read a JSONL embedding store; inverse of :func:`save_precomputed`."""
    sets: dict[str, EmbeddingSet] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(str(path), lineno, f"invalid JSON: {exc.msg}") from exc
            try:
                doc_id = obj["id"]
                dimension = int(obj["dimension"])
                layers = {
                    int(layer): np.asarray(rows, dtype=np.float64)
                    for layer, rows in obj["layers"].items()
                }
            except (KeyError, TypeError, ValueError) as exc:
                raise RecordError(str(path), lineno, f"bad embedding record: {exc}") from exc
            if not isinstance(doc_id, str) or not doc_id:
                raise RecordError(str(path), lineno, "id must be a nonempty string")
            if doc_id in sets:
                raise RecordError(str(path), lineno, f"duplicate document id {doc_id!r}")
            try:
                sets[doc_id] = EmbeddingSet(
                    source_id=doc_id, dimension=dimension, layers=layers
                )
            except (DimensionMismatchError, DegenerateVectorError) as exc:
                raise RecordError(str(path), lineno, str(exc)) from exc
    return sets


class OnnxEmbeddingProvider(EmbeddingProvider):
    """Optional real-encoder backend over an ONNX graph.

    The graph must accept ``input_ids`` and ``attention_mask`` (shape
    ``(1, tokens)``) and expose one output named ``layer_<k>`` of shape
    ``(1, tokens, dimension)`` per supported hidden layer. Sentence vectors
    are mean-pooled over non-padding tokens via :func:`pool_tokens`.

    Both ``onnxruntime`` and a local ``transformers`` tokenizer are loaded
    lazily; when either is absent a :class:`ProviderUnavailableError` is
    raised with install guidance.
    """

    def __init__(self, model_path: str, tokenizer_path: str | None = None):
        if not os.path.exists(model_path):
            raise ProviderUnavailableError(f"model file not found: {model_path}")
        try:
            import onnxruntime  # noqa: F401
        except ImportError as exc:
            raise ProviderUnavailableError(
                "the model provider needs the 'onnxruntime' package "
                "(pip install onnxruntime)"
            ) from exc
        try:
            from transformers import AutoTokenizer
        except ImportError as exc:
            raise ProviderUnavailableError(
                "the model provider needs the 'transformers' package for tokenisation"
            ) from exc
        self._session = onnxruntime.InferenceSession(model_path)
        self._tokenizer = AutoTokenizer.from_pretrained(tokenizer_path or model_path)
        self._outputs = {o.name for o in self._session.get_outputs()}

    def embed_sentences(self, sentences: SentenceList, layers: Iterable[int]) -> EmbeddingSet:
        layer_ids = _checked_layers(layers)
        missing = [l for l in layer_ids if f"layer_{l}" not in self._outputs]
        if missing:
            raise LayerNotSupportedError(
                f"model exposes {sorted(self._outputs)}, missing layers {missing}"
            )
        rows: dict[int, list[np.ndarray]] = {l: [] for l in layer_ids}
        for sentence in sentences:
            enc = self._tokenizer(sentence, return_tensors="np")
            out = self._session.run(
                [f"layer_{l}" for l in layer_ids],
                {
                    "input_ids": enc["input_ids"],
                    "attention_mask": enc["attention_mask"],
                },
            )
            mask = enc["attention_mask"][0].astype(bool)
            for layer_id, hidden in zip(layer_ids, out):
                rows[layer_id].append(pool_tokens(hidden[0][mask]))
        dimension = rows[layer_ids[0]][0].shape[0]
        return EmbeddingSet(
            source_id=sentences.source_id,
            dimension=int(dimension),
            layers={l: np.vstack(v) for l, v in rows.items()},
        )
