"""Scikit-learn style wrappers over the functional core.

These exist so the scoring flow composes with sklearn pipelines and model
selection: all constructor parameters are stored verbatim (``get_params`` /
``set_params`` / ``clone`` work), ``fit`` returns ``self``, and fitted state
carries the trailing underscore.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .dsi import DsiConfig, dsi
from .embeddings import EmbeddingProvider, MockEmbeddingProvider
from .errors import TooFewSentencesError
from .segmentation import SentenceList, segment
from .stats import ols_fit


def _check_text_sequence(X) -> list[str]:
    """Validate a 1-D sequence of strings (the transformers' input contract)."""
    if isinstance(X, str):
        raise TypeError("expected a sequence of documents, got a single string")
    texts = list(X)
    if not texts:
        raise ValueError("empty input: need at least one document")
    bad = [i for i, t in enumerate(texts) if not isinstance(t, str)]
    if bad:
        raise TypeError(f"document at index {bad[0]} is not a string")
    return texts


def _check_score_design(X) -> tuple[np.ndarray, list[str]]:
    """Validate a two-column (dsi, field) design; returns (floats, labels)."""
    rows = list(X)
    if not rows:
        raise ValueError("empty design matrix")
    try:
        values = np.asarray([float(r[0]) for r in rows], dtype=np.float64)
        labels = [str(r[1]) for r in rows]
    except (TypeError, ValueError, IndexError) as exc:
        raise ValueError(
            "expected rows of (dsi: float, field: str); " f"failed to parse: {exc}"
        ) from exc
    if not np.all(np.isfinite(values)):
        raise ValueError("dsi column contains non-finite values")
    return values, labels


class SentenceSegmenter(BaseEstimator, TransformerMixin):
    """Transform documents into lists of sentences.

    Parameters
    ----------
    extra_abbreviations : tuple of str
        Additional protected abbreviations appended to the built-in list.
    """

    def __init__(self, extra_abbreviations: tuple[str, ...] = ()):
        self.extra_abbreviations = extra_abbreviations

    def fit(self, X, y=None):
        _check_text_sequence(X)
        return self

    def transform(self, X) -> list[list[str]]:
        texts = _check_text_sequence(X)
        return [
            segment(t, extra_abbreviations=tuple(self.extra_abbreviations)).sentences
            for t in texts
        ]


class DsiScorer(BaseEstimator, TransformerMixin):
    """Transform documents into DSI scores (one float per document).

    Documents with fewer than three sentences score ``nan``; downstream
    steps can filter or impute.

    Parameters
    ----------
    provider : EmbeddingProvider or None
        Embedding backend; ``None`` builds a mock provider at fit time.
    dimension : int
        Mock embedding width, ignored when a provider instance is given.
    layers : tuple of int
        Encoder layers combined by the score.
    normalization : str
        ``"mean"`` or ``"4n"``; see :class:`dsibib.dsi.DsiConfig`.
    """

    def __init__(
        self,
        provider: EmbeddingProvider | None = None,
        dimension: int = 768,
        layers: tuple[int, ...] = (6, 7),
        normalization: str = "mean",
    ):
        self.provider = provider
        self.dimension = dimension
        self.layers = layers
        self.normalization = normalization

    def fit(self, X, y=None):
        _check_text_sequence(X)
        self.config_ = DsiConfig(layers=tuple(self.layers), normalization=self.normalization)
        self.provider_ = self.provider or MockEmbeddingProvider(dimension=self.dimension)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "provider_"):
            raise NotFittedError("DsiScorer must be fitted before calling transform")
        texts = _check_text_sequence(X)
        scores = np.empty(len(texts), dtype=np.float64)
        for i, text in enumerate(texts):
            sentences = segment(text, source_id=str(i))
            try:
                scores[i] = dsi(
                    self.provider_.embed_sentences(sentences, self.config_.layers),
                    self.config_,
                ).value
            except TooFewSentencesError:
                scores[i] = np.nan
            except ValueError:
                # empty sentence list: same degenerate case as too few
                scores[i] = np.nan
        return scores


class DsiOlsRegressor(BaseEstimator, RegressorMixin):
    """OLS of a response on a DSI column plus a categorical field factor.

    ``X`` rows are ``(dsi, field)`` pairs; ``y`` is the (already
    transformed) response, e.g. ``log10(cit5 + 1)``. Exposes the full
    inference table as ``result_``.
    """

    def fit(self, X, y):
        values, labels = _check_score_design(X)
        y = np.asarray(list(y), dtype=np.float64)
        if y.shape != values.shape:
            raise ValueError(f"y has shape {y.shape}, expected {values.shape}")
        self.result_ = ols_fit(
            y, numeric_predictors={"dsi": values}, categorical_predictors={"field": labels}
        )
        self.reference_level_ = self.result_.reference_level
        self._field_levels = sorted(set(labels))
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "result_"):
            raise NotFittedError("DsiOlsRegressor must be fitted before calling predict")
        values, labels = _check_score_design(X)
        coef = self.result_.coefficients
        out = np.full(values.shape, coef["Intercept"].estimate, dtype=np.float64)
        out += coef["dsi"].estimate * values
        for i, label in enumerate(labels):
            term = f"field[{label}]"
            if term in coef:
                out[i] += coef[term].estimate
            elif label != self.reference_level_:
                raise ValueError(f"unseen field level {label!r}")
        return out
