"""Shared fixtures-in-spirit: tiny corpus builders and a CLI harness."""

from __future__ import annotations

import io
import json
from contextlib import redirect_stdout

from dsibib import CorpusRecord, cli


def run_cli(argv: list[str]) -> tuple[int, str]:
    """Invoke the CLI in-process; returns (exit_code, stdout_text)."""
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = cli.main(argv)
    return code, buf.getvalue()


def spaced_abstract(n_spaces: int) -> str:
    """An abstract with exactly ``n_spaces`` ASCII spaces and 3 sentences."""
    if n_spaces < 7:
        raise ValueError("construction needs at least 7 spaces")
    words = ["W0"] + ["w%d" % i for i in range(1, n_spaces - 6)]
    return "First marker stands. Second marker follows. " + " ".join(words) + " ends."


def make_record(i: int, subject: str = "Physics", year: int = 2015, **kw) -> CorpusRecord:
    defaults = dict(
        id=f"rec-{i:04d}",
        title=f"Record {i} title",
        abstract=f"Alpha point {i} stands. Beta point {i} follows. Gamma point {i} closes.",
        primary_subject=subject,
        publication_year=year,
    )
    defaults.update(kw)
    return CorpusRecord(**defaults)


def write_jsonl(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def record_rows(records) -> list[dict]:
    rows = []
    for r in records:
        row = {
            "id": r.id,
            "title": r.title,
            "abstract": r.abstract,
            "primary_subject": r.primary_subject,
            "publication_year": r.publication_year,
        }
        for name in ("cit3", "cit5", "cit_total", "field"):
            value = getattr(r, name)
            if value is not None:
                row[name] = value
        rows.append(row)
    return rows
