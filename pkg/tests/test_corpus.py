"""Corpus I/O, filtering, mapping, and the seeded sampling scheme."""

import io
import json

import pytest

from dsibib import (
    CorpusRecord,
    DsiScore,
    ScoredRecord,
    citation_window_filter,
    filter_records,
    ingest,
    load_field_mapping,
    load_scores,
    map_fields,
    persist_scores,
    sample_per_subject,
    score_record_to_line,
    top_subjects,
    write_records,
)
from dsibib.errors import RecordError, UnmappedSubjectError

from helpers import make_record, record_rows, spaced_abstract, write_jsonl

MASK64 = (1 << 64) - 1


def shuffle_pick_oracle(key: str, seed: int, size: int, take: int) -> list[int]:
    """Independent reimplementation of the keyed-shuffle index selection."""
    h = 0xCBF29CE484222325
    for b in key.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK64
    state = h ^ (seed & MASK64)

    def next_u64() -> int:
        nonlocal state
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    idx = list(range(size))
    for i in range(size - 1, 0, -1):
        j = next_u64() % (i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return sorted(idx[:take])


class TestRecordValidation:
    def test_year_bounds(self):
        assert make_record(1, year=1800).publication_year == 1800
        assert make_record(2, year=2200).publication_year == 2200
        with pytest.raises(ValueError, match="publication_year"):
            make_record(3, year=1799)
        with pytest.raises(ValueError, match="publication_year"):
            make_record(4, year=2201)

    def test_empty_id(self):
        with pytest.raises(ValueError, match="nonempty"):
            make_record(1, id="")

    def test_negative_counts(self):
        with pytest.raises(ValueError, match="cit5"):
            make_record(1, cit5=-1)

    def test_window_counts_cannot_exceed_total(self):
        with pytest.raises(ValueError, match="exceed"):
            make_record(1, cit3=4, cit5=9, cit_total=8)
        # with cit_total absent the cross-check cannot fire
        assert make_record(2, cit3=4, cit5=9).cit_total is None

    def test_scored_record_needs_exactly_one_payload(self):
        record = make_record(1)
        score = DsiScore(value=0.5, n_sentences=3, n_pairs=12, normalization="mean")
        assert ScoredRecord(record=record, dsi=score).dsi is score
        assert ScoredRecord(record=record, skipped_reason="too-few-sentences").dsi is None
        with pytest.raises(ValueError, match="exactly one"):
            ScoredRecord(record=record, dsi=score, skipped_reason="too-few-sentences")
        with pytest.raises(ValueError, match="exactly one"):
            ScoredRecord(record=record)


class TestIngestJsonl:
    def test_order_and_values(self, tmp_path):
        records = [make_record(i, cit3=i, cit5=i + 1, cit_total=9) for i in range(4)]
        path = tmp_path / "c.jsonl"
        write_jsonl(path, record_rows(records))
        result = ingest(path, fmt="jsonl")
        assert result.records == records
        assert result.errors == []

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "c.jsonl"
        rows = record_rows([make_record(0), make_record(1)])
        path.write_text(json.dumps(rows[0]) + "\n\n  \n" + json.dumps(rows[1]) + "\n")
        assert len(ingest(path).records) == 2

    def test_invalid_json_names_path_and_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(record_rows([make_record(0)])[0]) + "\n{oops\n")
        with pytest.raises(RecordError, match=r"c\.jsonl:2: invalid JSON"):
            ingest(path)

    def test_non_object_row(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text("[1, 2, 3]\n")
        with pytest.raises(RecordError, match="not a JSON object"):
            ingest(path)

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "c.jsonl"
        row = record_rows([make_record(0)])[0]
        write_jsonl(path, [row, row])
        with pytest.raises(RecordError, match=r"c\.jsonl:2: duplicate record id 'rec-0000'"):
            ingest(path)

    def test_missing_required_column(self, tmp_path):
        path = tmp_path / "c.jsonl"
        row = record_rows([make_record(0)])[0]
        del row["abstract"]
        write_jsonl(path, [row])
        with pytest.raises(RecordError, match="abstract"):
            ingest(path)

    def test_empty_id_and_year_count_as_missing(self, tmp_path):
        path = tmp_path / "c.jsonl"
        row = record_rows([make_record(0)])[0]
        row["id"] = ""
        write_jsonl(path, [row])
        with pytest.raises(RecordError, match="id"):
            ingest(path)

    def test_non_integer_count(self, tmp_path):
        path = tmp_path / "c.jsonl"
        row = record_rows([make_record(0)])[0]
        row["cit3"] = "many"
        write_jsonl(path, [row])
        with pytest.raises(RecordError, match="expected an integer"):
            ingest(path)

    def test_permissive_collects_errors(self, tmp_path):
        path = tmp_path / "c.jsonl"
        good = record_rows([make_record(0), make_record(1)])
        bad = dict(good[0], id="rec-bad", publication_year=1500)
        write_jsonl(path, [good[0], bad, good[1]])
        result = ingest(path, permissive=True)
        assert [r.id for r in result.records] == ["rec-0000", "rec-0001"]
        assert len(result.errors) == 1
        assert result.errors[0].line == 2

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError, match="format"):
            ingest(tmp_path / "c.xml", fmt="xml")


class TestIngestCsv:
    def test_round_trip(self, tmp_path):
        records = [
            make_record(0, cit3=1, cit5=2, cit_total=3, field="PhysSci"),
            make_record(1, subject="Biology"),
        ]
        path = tmp_path / "c.csv"
        write_records(records, path, fmt="csv")
        result = ingest(path, fmt="csv")
        assert result.records == records

    def test_blank_optional_cells_become_none(self, tmp_path):
        path = tmp_path / "c.csv"
        write_records([make_record(0)], path, fmt="csv")
        record = ingest(path, fmt="csv").records[0]
        assert record.cit3 is None and record.cit5 is None and record.field is None

    def test_extra_cells_rejected(self, tmp_path):
        path = tmp_path / "c.csv"
        write_records([make_record(0)], path, fmt="csv")
        path.write_text(path.read_text() .rstrip("\n") + ",surplus\n")
        with pytest.raises(RecordError, match="more cells than header"):
            ingest(path, fmt="csv")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("")
        with pytest.raises(RecordError, match="missing header"):
            ingest(path, fmt="csv")

    def test_duplicate_reports_csv_line_number(self, tmp_path):
        path = tmp_path / "c.csv"
        write_records([make_record(0), make_record(0)], path, fmt="csv")
        with pytest.raises(RecordError, match=r"c\.csv:3"):
            ingest(path, fmt="csv")


class TestWriteRecords:
    def test_jsonl_round_trip(self, tmp_path):
        records = [make_record(i, cit_total=i * 2) for i in range(3)]
        path = tmp_path / "c.jsonl"
        write_records(records, path, fmt="jsonl")
        assert ingest(path, fmt="jsonl").records == records

    def test_stream_target_matches_path_target(self, tmp_path):
        records = [make_record(0, field="F")]
        path = tmp_path / "c.csv"
        write_records(records, path, fmt="csv")
        buf = io.StringIO()
        write_records(records, buf, fmt="csv")
        assert buf.getvalue() == path.read_text()

    def test_omits_absent_optionals_in_jsonl(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_records([make_record(0)], path, fmt="jsonl")
        obj = json.loads(path.read_text())
        assert "cit3" not in obj and "field" not in obj


class TestFieldMapping:
    def test_load_golden(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("subject,field\nPhysics,PhysSci\nBiology,LifeSci\n")
        assert load_field_mapping(path) == {"Physics": "PhysSci", "Biology": "LifeSci"}

    def test_header_is_case_and_space_tolerant(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(" Subject , Field \nPhysics,PhysSci\n")
        assert load_field_mapping(path) == {"Physics": "PhysSci"}

    def test_bad_header(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("area,domain\nPhysics,PhysSci\n")
        with pytest.raises(RecordError, match="subject,field"):
            load_field_mapping(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("")
        with pytest.raises(RecordError, match="empty mapping file"):
            load_field_mapping(path)

    def test_duplicate_subject(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("subject,field\nPhysics,A\nPhysics,B\n")
        with pytest.raises(RecordError, match=r"m\.csv:3: duplicate subject"):
            load_field_mapping(path)

    def test_blank_lines_skipped_and_short_rows_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("subject,field\n\nPhysics,PhysSci\n")
        assert load_field_mapping(path) == {"Physics": "PhysSci"}
        path.write_text("subject,field\nPhysics\n")
        with pytest.raises(RecordError, match="subject and field"):
            load_field_mapping(path)
        path.write_text("subject,field\nPhysics,\n")
        with pytest.raises(RecordError, match="subject and field"):
            load_field_mapping(path)

    def test_map_fields_strict(self):
        records = [make_record(0, subject="Physics"), make_record(1, subject="Alchemy")]
        with pytest.raises(UnmappedSubjectError, match=r"'Alchemy' \(record 'rec-0001'\)"):
            map_fields(records, {"Physics": "PhysSci"}, strict=True)

    def test_map_fields_permissive(self):
        records = [
            make_record(0, subject="Physics"),
            make_record(1, subject="Alchemy"),
            make_record(2, subject="Physics"),
            make_record(3, subject="Astrology"),
            make_record(4, subject="Alchemy"),
        ]
        mapped, unmapped = map_fields(records, {"Physics": "PhysSci"}, strict=False)
        assert [r.id for r in mapped] == ["rec-0000", "rec-0002"]
        assert all(r.field == "PhysSci" for r in mapped)
        assert unmapped == {"Alchemy": 2, "Astrology": 1}
        assert list(unmapped) == ["Alchemy", "Astrology"]
        # inputs are not mutated; field is attached on copies
        assert records[0].field is None


class TestFilters:
    def test_space_count_gate_is_inclusive(self):
        records = [
            make_record(0, abstract=spaced_abstract(198)),
            make_record(1, abstract=spaced_abstract(199)),
            make_record(2, abstract=spaced_abstract(299)),
            make_record(3, abstract=spaced_abstract(300)),
        ]
        kept = filter_records(records)
        assert [r.id for r in kept] == ["rec-0001", "rec-0002"]

    def test_custom_bounds_and_year_exclusion(self):
        records = [
            make_record(0, abstract=spaced_abstract(10), year=2020),
            make_record(1, abstract=spaced_abstract(10), year=2024),
            make_record(2, abstract=spaced_abstract(11), year=2020),
        ]
        kept = filter_records(records, min_spaces=10, max_spaces=10, exclude_years=[2024])
        assert [r.id for r in kept] == ["rec-0000"]

    def test_order_preserved(self):
        records = [make_record(i, abstract=spaced_abstract(200)) for i in range(6)]
        assert filter_records(records) == records

    def test_citation_window_inclusive(self):
        records = [make_record(i, year=2016 + i) for i in range(5)]  # 2016..2020
        kept = citation_window_filter(records, last_publication_year=2018)
        assert [r.publication_year for r in kept] == [2016, 2017, 2018]

    def test_top_subjects_count_then_lexicographic(self):
        records = (
            [make_record(i, subject="C") for i in range(2)]
            + [make_record(10 + i, subject="A") for i in range(3)]
            + [make_record(20 + i, subject="B") for i in range(2)]
            + [make_record(30, subject="D")]
        )
        kept = top_subjects(records, 2)
        assert sorted({r.primary_subject for r in kept}) == ["A", "B"]
        # original interleaving preserved
        assert [r.id for r in kept] == [f"rec-{10 + i:04d}" for i in range(3)] + [
            "rec-0020",
            "rec-0021",
        ]
        with pytest.raises(ValueError):
            top_subjects(records, 0)


class TestSampling:
    def test_matches_shuffle_oracle(self):
        for subject, seed, size, take in [
            ("Physics", 1, 10, 4),
            ("Biology", 99, 37, 12),
            ("synthetic", 20240817, 64, 9),
        ]:
            records = [make_record(i, subject=subject) for i in range(size)]
            picked = sample_per_subject(records, take, seed=seed)
            expected = shuffle_pick_oracle(subject, seed, size, take)
            assert [r.id for r in picked] == [records[i].id for i in expected]

    def test_frozen_checksum(self):
        records = [make_record(i, subject="synthetic") for i in range(2000)]
        picked = sample_per_subject(records, 1000, seed=20240817)
        indices = [int(r.id.split("-")[1]) for r in picked]
        assert len(indices) == 1000
        assert sum(indices) == 1005838
        assert indices[:8] == [0, 1, 6, 7, 8, 9, 10, 11]
        assert indices[-3:] == [1994, 1996, 1998]

    def test_quota_larger_than_group_returns_all(self):
        records = [make_record(i) for i in range(5)]
        assert sample_per_subject(records, 10, seed=0) == records

    def test_deterministic_and_seed_sensitive(self):
        records = [make_record(i) for i in range(50)]
        a = sample_per_subject(records, 10, seed=7)
        b = sample_per_subject(records, 10, seed=7)
        c = sample_per_subject(records, 10, seed=8)
        assert a == b
        assert a != c

    def test_subjects_grouped_lexicographically(self):
        records = [
            make_record(0, subject="Zoology"),
            make_record(1, subject="Astronomy"),
            make_record(2, subject="Zoology"),
            make_record(3, subject="Astronomy"),
        ]
        picked = sample_per_subject(records, 2, seed=1)
        assert [r.primary_subject for r in picked] == [
            "Astronomy",
            "Astronomy",
            "Zoology",
            "Zoology",
        ]
        assert [r.id for r in picked] == ["rec-0001", "rec-0003", "rec-0000", "rec-0002"]

    def test_per_year_quota_split(self):
        # Years ascending get base + 1 extra for the first (n % k) of k years:
        # n=4 over 3 years -> quotas 2, 1, 1.
        records = (
            [make_record(i, year=2010) for i in range(3)]
            + [make_record(10 + i, year=2011) for i in range(2)]
            + [make_record(20, year=2012)]
        )
        picked = sample_per_subject(records, 4, seed=5, per_year=True)
        by_year = {}
        for r in picked:
            by_year[r.publication_year] = by_year.get(r.publication_year, 0) + 1
        assert by_year == {2010: 2, 2011: 1, 2012: 1}

    def test_per_year_no_redistribution(self):
        records = [make_record(0, year=2010)] + [
            make_record(10 + i, year=2011) for i in range(5)
        ]
        picked = sample_per_subject(records, 4, seed=5, per_year=True)
        # quota 2 per year, 2010 only has one record, shortfall is not moved
        assert len(picked) == 3
        assert sum(1 for r in picked if r.publication_year == 2011) == 2

    def test_per_year_uses_cell_keys(self):
        records = [make_record(i, year=2010 + (i % 2)) for i in range(30)]
        picked = sample_per_subject(records, 6, seed=3, per_year=True)
        cells = {}
        for r in picked:
            cells.setdefault(r.publication_year, []).append(int(r.id.split("-")[1]))
        for year, members in cells.items():
            positions = [i for i in range(30) if 2010 + (i % 2) == year]
            oracle = shuffle_pick_oracle(f"Physics\x1f{year}", 3, len(positions), 3)
            assert members == [positions[i] for i in oracle]

    def test_rejects_nonpositive_quota(self):
        with pytest.raises(ValueError):
            sample_per_subject([make_record(0)], 0, seed=1)


class TestScorePersistence:
    def _scored(self):
        return [
            ScoredRecord(
                record=make_record(0, cit5=3, field="PhysSci"),
                dsi=DsiScore(value=1.0 / 3.0, n_sentences=5, n_pairs=40, normalization="mean"),
            ),
            ScoredRecord(
                record=make_record(1),
                dsi=DsiScore(value=0.25, n_sentences=4, n_pairs=None, normalization="4n"),
            ),
            ScoredRecord(record=make_record(2), skipped_reason="too-few-sentences"),
        ]

    def test_round_trip_exact(self, tmp_path):
        path = tmp_path / "s.jsonl"
        scored = self._scored()
        persist_scores(scored, path)
        assert load_scores(path) == scored

    def test_line_format(self):
        scored = self._scored()
        with_pairs = json.loads(score_record_to_line(scored[0]))
        assert with_pairs["dsi"] == 1.0 / 3.0
        assert with_pairs["n_pairs"] == 40
        assert "skipped_reason" not in with_pairs
        without_pairs = json.loads(score_record_to_line(scored[1]))
        assert "n_pairs" not in without_pairs
        skipped = json.loads(score_record_to_line(scored[2]))
        assert skipped["skipped_reason"] == "too-few-sentences"
        assert "dsi" not in skipped

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "s.jsonl"
        line = score_record_to_line(self._scored()[0])
        path.write_text(line + "\n" + line + "\n")
        with pytest.raises(RecordError, match="duplicate record id"):
            load_scores(path)

    def test_score_and_skip_are_mutually_exclusive(self, tmp_path):
        path = tmp_path / "s.jsonl"
        obj = json.loads(score_record_to_line(self._scored()[0]))
        obj["skipped_reason"] = "provider-failure"
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(RecordError, match="both dsi and skipped_reason"):
            load_scores(path)
        obj = record_rows([make_record(9)])[0]
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(RecordError, match="neither dsi nor skipped_reason"):
            load_scores(path)

    def test_bad_score_fields(self, tmp_path):
        path = tmp_path / "s.jsonl"
        obj = json.loads(score_record_to_line(self._scored()[0]))
        obj["dsi"] = "high"
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(RecordError, match="bad score fields"):
            load_scores(path)
