"""Exception types shared across the package.

Anything raised on bad *data* (files, records, embeddings) derives from
:class:`DsibibError` so the CLI can map it to a data-error exit code in one
place. Plain ``ValueError`` / ``TypeError`` are reserved for programming
errors such as out-of-range arguments.
"""

from __future__ import annotations


class DsibibError(Exception):
    """Base class for data and provider errors raised by this package."""


class ProviderUnavailableError(DsibibError):
    """An embedding backend cannot be constructed (missing runtime or file)."""


class LayerNotSupportedError(DsibibError):
    """A requested encoder layer is not available from the provider."""


class MissingEmbeddingError(DsibibError):
    """A precomputed store has no entry for the requested document id."""


class DimensionMismatchError(DsibibError):
    """Embedding shapes disagree with the declared dimension or sentence count."""


class DegenerateVectorError(DsibibError):
    """An embedding vector has zero Euclidean norm."""


class TooFewSentencesError(DsibibError):
    """DSI is undefined for documents with fewer than three sentences."""


class MissingLayerError(DsibibError):
    """An EmbeddingSet lacks a layer required by the DSI configuration."""


class RecordError(DsibibError):
    """A corpus, score, mapping or embedding file row failed to parse.

    Carries enough context (path + 1-based line number) for an actionable
    one-line message.
    """

    def __init__(self, path: str, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class UnmappedSubjectError(DsibibError):
    """Strict field mapping hit a subject with no entry in the mapping."""


class CheckpointError(DsibibError):
    """A checkpoint file is unreadable or inconsistent with the input corpus."""
