"""Corpus records: ingest, filtering, field mapping, sampling, persistence.

Record files are JSONL (one object per line) or CSV with identical column
names: ``id, title, abstract, primary_subject, publication_year, cit3, cit5,
cit_total`` plus an optional ``field``. Citation counts may be absent; the
analyses that need them fail with an actionable message instead.

Scored-record files reuse the record columns and add either the score fields
(``dsi``, ``n_sentences``, ``n_pairs``, ``normalization``) or a
``skipped_reason`` - never both.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .dsi import DsiScore
from .errors import RecordError, UnmappedSubjectError
from .rng import MASK64, SplitMix64, fnv1a_64
from .segmentation import passes_length_filter

_RECORD_COLUMNS = (
    "id",
    "title",
    "abstract",
    "primary_subject",
    "publication_year",
    "cit3",
    "cit5",
    "cit_total",
)
_SCORE_COLUMNS = ("dsi", "n_sentences", "n_pairs", "normalization", "skipped_reason")

#: Skip reasons a scored record may carry instead of a DSI value.
SKIP_TOO_FEW_SENTENCES = "too-few-sentences"
SKIP_MISSING_EMBEDDING = "missing-embedding"
SKIP_PROVIDER_FAILURE = "provider-failure"


@dataclass
class CorpusRecord:
    """One article: text, taxonomy and citation counts."""

    id: str
    title: str
    abstract: str
    primary_subject: str
    publication_year: int
    cit3: int | None = None
    cit5: int | None = None
    cit_total: int | None = None
    field: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be a nonempty string")
        if not 1800 <= int(self.publication_year) <= 2200:
            raise ValueError(
                f"record {self.id!r}: implausible publication_year {self.publication_year}"
            )
        for name in ("cit3", "cit5", "cit_total"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"record {self.id!r}: {name} must be >= 0, got {value}")
        if (
            self.cit3 is not None
            and self.cit5 is not None
            and self.cit_total is not None
            and not (self.cit3 <= self.cit_total and self.cit5 <= self.cit_total)
        ):
            raise ValueError(
                f"record {self.id!r}: windowed counts exceed cit_total "
                f"({self.cit3}, {self.cit5} vs {self.cit_total})"
            )


@dataclass
class ScoredRecord:
    """A corpus record paired with exactly one of: a DSI score, a skip reason."""

    record: CorpusRecord
    dsi: DsiScore | None = None
    skipped_reason: str | None = None

    def __post_init__(self):
        if (self.dsi is None) == (self.skipped_reason is None):
            raise ValueError(
                f"record {self.record.id!r}: exactly one of dsi / skipped_reason required"
            )


@dataclass
class IngestResult:
    """Parsed records plus, under the permissive flag, per-row error notes."""

    records: list[CorpusRecord]
    errors: list[RecordError] = field(default_factory=list)


FieldMapping = dict  # subject label -> field label


def _record_from_mapping(obj: Mapping, path: str, line: int) -> CorpusRecord:
    missing = [c for c in _RECORD_COLUMNS[:5] if c not in obj or obj[c] is None]
    for c in ("id", "publication_year"):
        if c not in missing and obj.get(c) == "":
            missing.append(c)
    if missing:
        raise RecordError(path, line, f"missing required column(s): {', '.join(missing)}")

    def _opt_int(name: str):
        value = obj.get(name)
        if value is None or value == "":
            return None
        try:
            return int(value)
        except (TypeError, ValueError):
            raise RecordError(path, line, f"column {name!r}: expected an integer, got {value!r}")

    try:
        return CorpusRecord(
            id=str(obj["id"]),
            title=str(obj["title"]),
            abstract=str(obj["abstract"]),
            primary_subject=str(obj["primary_subject"]),
            publication_year=_opt_int("publication_year"),
            cit3=_opt_int("cit3"),
            cit5=_opt_int("cit5"),
            cit_total=_opt_int("cit_total"),
            field=str(obj["field"]) if obj.get("field") not in (None, "") else None,
        )
    except ValueError as exc:
        raise RecordError(path, line, str(exc)) from exc


def ingest(
    path: str | os.PathLike,
    fmt: str = "jsonl",
    permissive: bool = False,
) -> IngestResult:
    """Read corpus records, preserving file order.

    Malformed rows raise a :class:`RecordError` naming the path and line;
    with ``permissive=True`` they are collected on the result instead and
    parsing continues. Duplicate ids are always treated as row errors.
    """
    if fmt not in ("jsonl", "csv"):
        raise ValueError(f"unknown format {fmt!r}; expected 'jsonl' or 'csv'")
    records: list[CorpusRecord] = []
    errors: list[RecordError] = []
    seen: set[str] = set()

    def _add(obj: Mapping, line: int):
        record = _record_from_mapping(obj, str(path), line)
        if record.id in seen:
            raise RecordError(str(path), line, f"duplicate record id {record.id!r}")
        seen.add(record.id)
        records.append(record)

    with open(path, "r", encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            for lineno, raw in enumerate(fh, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    obj = json.loads(raw)
                    if not isinstance(obj, dict):
                        raise RecordError(str(path), lineno, "row is not a JSON object")
                    _add(obj, lineno)
                except json.JSONDecodeError as exc:
                    err = RecordError(str(path), lineno, f"invalid JSON: {exc.msg}")
                    if not permissive:
                        raise err from exc
                    errors.append(err)
                except RecordError as err:
                    if not permissive:
                        raise
                    errors.append(err)
        else:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise RecordError(str(path), 1, "empty CSV file (missing header)")
            for obj in reader:
                lineno = reader.line_num
                try:
                    if None in obj:
                        raise RecordError(str(path), lineno, "row has more cells than header")
                    _add(obj, lineno)
                except RecordError as err:
                    if not permissive:
                        raise
                    errors.append(err)
    return IngestResult(records=records, errors=errors)


def write_records(records: Iterable[CorpusRecord], target, fmt: str = "jsonl") -> None:
    """Write records in the ingest schema; inverse of :func:`ingest`.

    ``target`` is a path or an open text stream.
    """
    if fmt not in ("jsonl", "csv"):
        raise ValueError(f"unknown format {fmt!r}; expected 'jsonl' or 'csv'")
    if hasattr(target, "write"):
        _write_records_to(records, target, fmt)
    else:
        with open(target, "w", encoding="utf-8", newline="") as fh:
            _write_records_to(records, fh, fmt)


def _write_records_to(records: Iterable[CorpusRecord], fh, fmt: str) -> None:
    if fmt == "jsonl":
        for record in records:
            fh.write(json.dumps(_record_to_mapping(record), ensure_ascii=False) + "\n")
        return
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(_RECORD_COLUMNS + ("field",))
    for r in records:
        writer.writerow(
            [
                r.id,
                r.title,
                r.abstract,
                r.primary_subject,
                r.publication_year,
                "" if r.cit3 is None else r.cit3,
                "" if r.cit5 is None else r.cit5,
                "" if r.cit_total is None else r.cit_total,
                "" if r.field is None else r.field,
            ]
        )


def _record_to_mapping(r: CorpusRecord) -> dict:
    obj = {
        "id": r.id,
        "title": r.title,
        "abstract": r.abstract,
        "primary_subject": r.primary_subject,
        "publication_year": r.publication_year,
    }
    for name in ("cit3", "cit5", "cit_total", "field"):
        value = getattr(r, name)
        if value is not None:
            obj[name] = value
    return obj


def load_field_mapping(path: str | os.PathLike) -> FieldMapping:
    """Read a two-column ``subject,field`` CSV (header required)."""
    mapping: FieldMapping = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RecordError(str(path), 1, "empty mapping file")
        if [h.strip().lower() for h in header[:2]] != ["subject", "field"]:
            raise RecordError(str(path), 1, "mapping header must be 'subject,field'")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2 or not row[0] or not row[1]:
                raise RecordError(str(path), lineno, "mapping rows need subject and field")
            subject = row[0]
            if subject in mapping:
                raise RecordError(str(path), lineno, f"duplicate subject {subject!r}")
            mapping[subject] = row[1]
    return mapping


def map_fields(
    records: Sequence[CorpusRecord],
    mapping: FieldMapping,
    strict: bool = True,
) -> tuple[list[CorpusRecord], dict[str, int]]:
    """Attach a field label to each record via its primary subject.

    Returns ``(mapped_records, unmapped)`` where ``unmapped`` counts excluded
    records per unknown subject. Under ``strict=True`` an unknown subject
    raises :class:`UnmappedSubjectError` instead.
    """
    mapped: list[CorpusRecord] = []
    unmapped: dict[str, int] = {}
    for record in records:
        label = mapping.get(record.primary_subject)
        if label is None:
            if strict:
                raise UnmappedSubjectError(
                    f"subject {record.primary_subject!r} (record {record.id!r}) "
                    "has no field mapping"
                )
            unmapped[record.primary_subject] = unmapped.get(record.primary_subject, 0) + 1
            continue
        mapped.append(replace(record, field=label))
    return mapped, dict(sorted(unmapped.items()))


def filter_records(
    records: Sequence[CorpusRecord],
    min_spaces: int = 199,
    max_spaces: int = 299,
    exclude_years: Iterable[int] = (),
) -> list[CorpusRecord]:
    """Keep records whose abstract passes the space-count gate and whose
    publication year is not excluded. Order is preserved (stable filter)."""
    excluded = {int(y) for y in exclude_years}
    return [
        r
        for r in records
        if r.publication_year not in excluded
        and passes_length_filter(r.abstract, min_spaces, max_spaces)
    ]


def citation_window_filter(
    records: Sequence[CorpusRecord], last_publication_year: int = 2018
) -> list[CorpusRecord]:
    """Keep records published in or before ``last_publication_year`` so the
    citation window has fully elapsed. Inclusive and stable."""
    return [r for r in records if r.publication_year <= last_publication_year]


def top_subjects(records: Sequence[CorpusRecord], n: int) -> list[CorpusRecord]:
    """Keep records belonging to the ``n`` largest subjects by record count.

    Ties break lexicographically on the subject label; record order is
    preserved.
    """
    if n < 1:
        raise ValueError(f"top_subjects needs n >= 1, got {n}")
    counts: dict[str, int] = {}
    for r in records:
        counts[r.primary_subject] = counts.get(r.primary_subject, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = {subject for subject, _ in ranked[:n]}
    return [r for r in records if r.primary_subject in keep]


def _keyed_shuffle_pick(key: str, seed: int, size: int, take: int) -> list[int]:
    """Indices selected by the seeded Fisher-Yates shuffle, sorted ascending.

    The stream seed is ``fnv1a_64(utf8(key)) XOR seed``; the shuffle walks
    ``i = size-1 .. 1`` swapping with ``j = next_u64() % (i + 1)``; the first
    ``take`` positions of the shuffled index list are selected and re-sorted
    so callers keep stable input order.
    """
    stream = SplitMix64(fnv1a_64(key.encode("utf-8")) ^ (seed & MASK64))
    idx = list(range(size))
    for i in range(size - 1, 0, -1):
        j = stream.next_below(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return sorted(idx[:take])


def sample_per_subject(
    records: Sequence[CorpusRecord],
    n_per_subject: int,
    seed: int,
    per_year: bool = False,
) -> list[CorpusRecord]:
    """Draw up to ``n_per_subject`` records per subject, reproducibly.

    Sampling is uniform without replacement via the keyed shuffle documented
    on :func:`_keyed_shuffle_pick` (key = subject label, or ``subject +
    "\\x1f" + year`` per year cell when ``per_year`` is set). Output is
    grouped by subject in lexicographic order; within a subject, records keep
    their input order.

    With ``per_year=True`` the quota is spread evenly over the subject's
    publication years (ascending): the first ``n % k`` years of ``k`` get one
    extra. Years with fewer records than their quota contribute what they
    have; no redistribution.
    """
    if n_per_subject < 1:
        raise ValueError(f"n_per_subject must be >= 1, got {n_per_subject}")
    groups: dict[str, list[CorpusRecord]] = {}
    for record in records:
        groups.setdefault(record.primary_subject, []).append(record)

    out: list[CorpusRecord] = []
    for subject in sorted(groups):
        members = groups[subject]
        if not per_year:
            picks = _keyed_shuffle_pick(subject, seed, len(members), n_per_subject)
            out.extend(members[i] for i in picks)
            continue
        by_year: dict[int, list[int]] = {}
        for pos, record in enumerate(members):
            by_year.setdefault(record.publication_year, []).append(pos)
        years = sorted(by_year)
        base, extra = divmod(n_per_subject, len(years))
        chosen: list[int] = []
        for rank, year in enumerate(years):
            quota = base + (1 if rank < extra else 0)
            cell = by_year[year]
            picks = _keyed_shuffle_pick(f"{subject}\x1f{year}", seed, len(cell), quota)
            chosen.extend(cell[i] for i in picks)
        out.extend(members[i] for i in sorted(chosen))
    return out


def persist_scores(scored: Iterable[ScoredRecord], path: str | os.PathLike) -> None:
    """Write scored records as JSONL with full float precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in iter_score_lines(scored):
            fh.write(line + "\n")


def score_record_to_line(sr: ScoredRecord) -> str:
    """One scored record as a JSONL line (also the checkpoint line format)."""
    obj = _record_to_mapping(sr.record)
    if sr.dsi is not None:
        obj["dsi"] = sr.dsi.value
        obj["n_sentences"] = sr.dsi.n_sentences
        if sr.dsi.n_pairs is not None:
            obj["n_pairs"] = sr.dsi.n_pairs
        obj["normalization"] = sr.dsi.normalization
    else:
        obj["skipped_reason"] = sr.skipped_reason
    return json.dumps(obj, ensure_ascii=False)


def iter_score_lines(scored: Iterable[ScoredRecord]) -> Iterable[str]:
    """Serialised JSONL lines for scored records."""
    for sr in scored:
        yield score_record_to_line(sr)


def score_record_from_mapping(obj: Mapping, path: str, line: int) -> ScoredRecord:
    """Parse one scored-record object (shared by score files and checkpoints)."""
    record = _record_from_mapping(obj, path, line)
    has_score = "dsi" in obj
    has_skip = "skipped_reason" in obj
    if has_score and has_skip:
        raise RecordError(path, line, "both dsi and skipped_reason present")
    if not has_score and not has_skip:
        raise RecordError(path, line, "neither dsi nor skipped_reason present")
    if has_skip:
        return ScoredRecord(record=record, skipped_reason=str(obj["skipped_reason"]))
    try:
        score = DsiScore(
            value=float(obj["dsi"]),
            n_sentences=int(obj["n_sentences"]),
            n_pairs=int(obj["n_pairs"]) if obj.get("n_pairs") is not None else None,
            normalization=str(obj["normalization"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordError(path, line, f"bad score fields: {exc}") from exc
    return ScoredRecord(record=record, dsi=score)


def load_scores(path: str | os.PathLike) -> list[ScoredRecord]:
    """Read a scored-record JSONL file; inverse of :func:`persist_scores`."""
    out: list[ScoredRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise RecordError(str(path), lineno, f"invalid JSON: {exc.msg}") from exc
            sr = score_record_from_mapping(obj, str(path), lineno)
            if sr.record.id in seen:
                raise RecordError(str(path), lineno, f"duplicate record id {sr.record.id!r}")
            seen.add(sr.record.id)
            out.append(sr)
    return out
