"""Narrative composition, length filtering and rule-based sentence segmentation.

The segmenter is deliberately rule-based and deterministic: a boundary is a
``.``, ``!`` or ``?`` followed by whitespace and then an uppercase letter,
digit, or opening quote/bracket. A candidate ``.`` is suppressed when it
terminates a protected abbreviation (see :data:`PROTECTED_ABBREVIATIONS`),
when it is a single-uppercase-letter initial such as ``J.``, or when it sits
between two digits inside a decimal number.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

#: Abbreviations whose trailing period never ends a sentence. Matching is
#: case-sensitive and requires a non-alphanumeric character (or start of
#: text) immediately before the abbreviation. Extend per call via
#: ``segment(..., extra_abbreviations=...)``.
PROTECTED_ABBREVIATIONS: tuple[str, ...] = (
    "e.g.",
    "i.e.",
    "E.g.",
    "I.e.",
    "et al.",
    "vs.",
    "cf.",
    "Cf.",
    "Fig.",
    "Figs.",
    "Eq.",
    "Eqs.",
    "Ref.",
    "Refs.",
    "Dr.",
    "Prof.",
    "Mr.",
    "Mrs.",
    "Ms.",
    "St.",
    "No.",
    "Nos.",
    "approx.",
    "ca.",
)

_TERMINATORS = ".!?"
_OPENERS = "\"'“‘«([{"

_CANDIDATE = re.compile(r"[.!?]")


@dataclass
class SentenceList:
    """Ordered sentences extracted from one document."""

    sentences: list[str]
    source_id: str = ""

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


def compose_narrative(title: str, abstract: str) -> str:
    """Join title and abstract into one narrative text.

    A ``". "`` separator is inserted unless the trimmed title already ends in
    a sentence terminator, in which case a single space suffices. An empty
    part yields the other part (trimmed) unchanged.
    """
    title = title.strip()
    abstract = abstract.strip()
    if not title:
        return abstract
    if not abstract:
        return title
    if title[-1] in _TERMINATORS:
        return title + " " + abstract
    return title + ". " + abstract


def count_spaces(text: str) -> int:
    """Count ASCII space characters (U+0020 only; tabs and NBSP excluded)."""
    return text.count(" ")


def passes_length_filter(abstract: str, min_spaces: int = 199, max_spaces: int = 299) -> bool:
    """Inclusive space-count gate used to keep roughly 200-300 word abstracts."""
    if min_spaces > max_spaces:
        raise ValueError(
            f"invalid range: min_spaces={min_spaces} exceeds max_spaces={max_spaces}"
        )
    return min_spaces <= count_spaces(abstract) <= max_spaces


def _is_decimal_point(text: str, i: int) -> bool:
    return (
        text[i] == "."
        and 0 < i < len(text) - 1
        and text[i - 1].isdigit()
        and text[i + 1].isdigit()
    )


def _is_protected_abbreviation(text: str, i: int, abbreviations: tuple[str, ...]) -> bool:
    """True when the period at ``i`` ends a protected abbreviation or initial."""
    end = i + 1
    for abbr in abbreviations:
        start = end - len(abbr)
        if start < 0 or text[start:end] != abbr:
            continue
        if start == 0 or not text[start - 1].isalnum():
            return True
    # Single-letter initials: "J. Smith", mid-name "A. B. Chen".
    prev = text[i - 1] if i > 0 else ""
    if prev.isalpha() and prev.isupper():
        if i - 1 == 0 or not text[i - 2].isalnum():
            return True
    return False


def segment(
    text: str,
    source_id: str = "",
    extra_abbreviations: tuple[str, ...] = (),
) -> SentenceList:
    """Split ``text`` into trimmed, non-empty sentences.

    Every character of every output sentence appears in the input in order;
    joining the sentences with single spaces reconstructs the input up to
    whitespace.
    """
    abbreviations = PROTECTED_ABBREVIATIONS + tuple(extra_abbreviations)
    n = len(text)
    cut_points: list[int] = []
    for match in _CANDIDATE.finditer(text):
        i = match.start()
        j = i + 1
        if j >= n or not text[j].isspace():
            continue
        k = j
        while k < n and text[k].isspace():
            k += 1
        if k >= n:
            continue
        nxt = text[k]
        if not (nxt.isupper() or nxt.isdigit() or nxt in _OPENERS):
            continue
        if text[i] == ".":
            if _is_decimal_point(text, i):
                continue
            if _is_protected_abbreviation(text, i, abbreviations):
                continue
        cut_points.append(i + 1)

    sentences: list[str] = []
    start = 0
    for cut in cut_points:
        span = text[start:cut].strip()
        if span:
            sentences.append(span)
        start = cut
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return SentenceList(sentences=sentences, source_id=source_id)
