"""Data-parallel scoring pipeline with checkpoint/resume.

Each record is scored independently (segment -> embed -> DSI), so results are
bit-identical no matter how the work is split: the final list is sorted by
record id and per-record arithmetic does not depend on the worker. Workers
run in separate processes (``parallelism >= 2``) or inline (``parallelism ==
1``, safe on single-threaded hosts).

The checkpoint file is line-delimited scored records, the same schema as a
results file, so a partial checkpoint is already a usable partial result.
The parent process is the only checkpoint writer; lines are appended and
flushed every ``checkpoint_every`` completions.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import (
    CorpusRecord,
    SKIP_MISSING_EMBEDDING,
    SKIP_PROVIDER_FAILURE,
    SKIP_TOO_FEW_SENTENCES,
    ScoredRecord,
    score_record_from_mapping,
    score_record_to_line,
)
from .dsi import DsiConfig, dsi
from .embeddings import EmbeddingProvider, MockEmbeddingProvider
from .errors import CheckpointError, MissingEmbeddingError, RecordError
from .segmentation import compose_narrative, segment

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    """Provider, scoring and execution settings for one run."""

    provider: EmbeddingProvider
    dsi_config: DsiConfig = field(default_factory=DsiConfig)
    parallelism: int = 1
    retries: int = 2
    checkpoint_path: str | None = None
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.retries < 0:
            raise ValueError(f"retries must be >= 0, got {self.retries}")
        if self.checkpoint_every < 1:
            raise ValueError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")


@dataclass
class RunReport:
    """Machine-readable summary of one scoring run."""

    records_scored: int
    records_skipped: int
    skip_reasons: dict[str, int]
    wall_seconds: float
    throughput_per_second: float
    stage_seconds: dict[str, float]  # keys: segment, embed, dsi

    def to_json(self) -> str:
        return json.dumps(
            {
                "records_scored": self.records_scored,
                "records_skipped": self.records_skipped,
                "skip_reasons": dict(sorted(self.skip_reasons.items())),
                "wall_seconds": self.wall_seconds,
                "throughput_per_second": self.throughput_per_second,
                "stage_seconds": {k: self.stage_seconds[k] for k in ("segment", "embed", "dsi")},
            }
        )


def _score_one(
    record: CorpusRecord,
    provider: EmbeddingProvider,
    config: DsiConfig,
    retries: int,
) -> tuple[ScoredRecord, float, float, float]:
    """Score one record; returns (result, segment_s, embed_s, dsi_s)."""
    t0 = time.perf_counter()
    sentences = segment(compose_narrative(record.title, record.abstract), source_id=record.id)
    t1 = time.perf_counter()
    if len(sentences) < 3:
        return ScoredRecord(record=record, skipped_reason=SKIP_TOO_FEW_SENTENCES), t1 - t0, 0.0, 0.0

    attempt = 0
    while True:
        try:
            t2 = time.perf_counter()
            embeddings = provider.embed_sentences(sentences, config.layers)
            t3 = time.perf_counter()
            break
        except MissingEmbeddingError:
            return ScoredRecord(record=record, skipped_reason=SKIP_MISSING_EMBEDDING), t1 - t0, 0.0, 0.0
        except Exception as exc:  # provider hiccup: retry, then mark skipped
            attempt += 1
            if attempt > retries:
                logger.warning("record %s: provider failed after %d attempts: %s", record.id, attempt, exc)
                return (
                    ScoredRecord(record=record, skipped_reason=SKIP_PROVIDER_FAILURE),
                    t1 - t0,
                    0.0,
                    0.0,
                )
    score = dsi(embeddings, config)
    t4 = time.perf_counter()
    return ScoredRecord(record=record, dsi=score), t1 - t0, t3 - t2, t4 - t3


_WORKER: dict = {}


def _worker_init(provider: EmbeddingProvider, config: DsiConfig, retries: int) -> None:
    _WORKER["args"] = (provider, config, retries)


def _worker_score(record: CorpusRecord):
    provider, config, retries = _WORKER["args"]
    return _score_one(record, provider, config, retries)


def load_checkpoint(path: str) -> dict[str, ScoredRecord]:
    """Parse a checkpoint file; any bad line fails the run, naming the line."""
    done: dict[str, ScoredRecord] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                sr = score_record_from_mapping(json.loads(raw), path, lineno)
            except (json.JSONDecodeError, RecordError, ValueError) as exc:
                raise CheckpointError(f"corrupt checkpoint {path}:{lineno}: {exc}") from exc
            done[sr.record.id] = sr
    return done


def run_scoring(
    records: Sequence[CorpusRecord],
    config: PipelineConfig,
    _precomputed: dict[str, ScoredRecord] | None = None,
) -> tuple[list[ScoredRecord], RunReport]:
    """Score every record exactly once; output sorted by record id.

    When ``config.checkpoint_path`` is set, completions are appended there as
    they arrive (truncating any existing file; use :func:`resume` to keep
    one). ``_precomputed`` carries checkpointed results in from resume.
    """
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate record ids in input")
    done = dict(_precomputed or {})
    todo = [r for r in records if r.id not in done]

    wall_start = time.perf_counter()
    stage = {"segment": 0.0, "embed": 0.0, "dsi": 0.0}
    skip_reasons: dict[str, int] = {}
    fresh: list[ScoredRecord] = []

    checkpoint_fh = None
    if config.checkpoint_path:
        mode = "a" if _precomputed else "w"
        checkpoint_fh = open(config.checkpoint_path, mode, encoding="utf-8")
    pending_lines = 0

    def _consume(result: tuple[ScoredRecord, float, float, float]):
        nonlocal pending_lines
        scored, seg_s, emb_s, dsi_s = result
        stage["segment"] += seg_s
        stage["embed"] += emb_s
        stage["dsi"] += dsi_s
        if scored.skipped_reason is not None:
            skip_reasons[scored.skipped_reason] = skip_reasons.get(scored.skipped_reason, 0) + 1
        fresh.append(scored)
        if checkpoint_fh is not None:
            checkpoint_fh.write(score_record_to_line(scored) + "\n")
            pending_lines += 1
            if pending_lines >= config.checkpoint_every:
                checkpoint_fh.flush()
                pending_lines = 0

    try:
        if config.parallelism == 1 or len(todo) <= 1:
            for record in todo:
                _consume(_score_one(record, config.provider, config.dsi_config, config.retries))
        else:
            chunk = max(1, len(todo) // (config.parallelism * 4))
            with ProcessPoolExecutor(
                max_workers=config.parallelism,
                initializer=_worker_init,
                initargs=(config.provider, config.dsi_config, config.retries),
            ) as pool:
                for result in pool.map(_worker_score, todo, chunksize=chunk):
                    _consume(result)
    finally:
        if checkpoint_fh is not None:
            checkpoint_fh.close()

    out = sorted(list(done.values()) + fresh, key=lambda sr: sr.record.id)
    wall = time.perf_counter() - wall_start
    scored_count = sum(1 for sr in out if sr.dsi is not None)
    report = RunReport(
        records_scored=scored_count,
        records_skipped=len(out) - scored_count,
        skip_reasons=skip_reasons,
        wall_seconds=wall,
        throughput_per_second=(len(todo) / wall) if wall > 0 else 0.0,
        stage_seconds=stage,
    )
    return out, report


def resume(
    records: Sequence[CorpusRecord], config: PipelineConfig
) -> tuple[list[ScoredRecord], RunReport]:
    """Continue a checkpointed run; already-checkpointed ids are reused.

    Checkpoint ids absent from the input are reported as warnings and
    dropped; a corrupt checkpoint refuses the run with the offending line.
    The final output equals a fresh full run because scoring is
    deterministic.
    """
    if not config.checkpoint_path:
        raise ValueError("resume requires a checkpoint_path")
    if not os.path.exists(config.checkpoint_path):
        logger.warning("checkpoint %s does not exist; starting fresh", config.checkpoint_path)
        return run_scoring(records, config)
    done = load_checkpoint(config.checkpoint_path)
    known = {r.id for r in records}
    stray = sorted(set(done) - known)
    if stray:
        logger.warning(
            "checkpoint %s has %d record id(s) not in the input (e.g. %s); ignoring them",
            config.checkpoint_path,
            len(stray),
            stray[0],
        )
        for rid in stray:
            done.pop(rid)
    return run_scoring(records, config, _precomputed=done)


def synthesize_records(
    n_records: int, sentences_per_record: int, seed_text: str = "benchmark"
) -> list[CorpusRecord]:
    """Deterministic synthetic corpus whose narratives segment to exactly
    ``sentences_per_record`` sentences each (title contributes the first)."""
    if n_records < 1 or sentences_per_record < 1:
        raise ValueError("n_records and sentences_per_record must be >= 1")
    records = []
    for i in range(n_records):
        body = " ".join(
            f"Topic {j} of item {i} in {seed_text} shows pattern {(i * 31 + j * 7) % 1009}."
            for j in range(1, sentences_per_record)
        )
        records.append(
            CorpusRecord(
                id=f"bench-{i:06d}",
                title=f"Synthetic {seed_text} record {i} overview",
                abstract=body,
                primary_subject=f"Subject {i % 10}",
                publication_year=2015,
                cit3=i % 7,
                cit5=i % 13,
                cit_total=(i % 13) + (i % 7),
            )
        )
    return records


def benchmark(
    n_records: int,
    sentences_per_record: int,
    dimension: int = 768,
    parallelism: int = 1,
) -> RunReport:
    """Score a synthetic corpus with the mock provider and return the report."""
    records = synthesize_records(n_records, sentences_per_record)
    config = PipelineConfig(
        provider=MockEmbeddingProvider(dimension=dimension), parallelism=parallelism
    )
    _, report = run_scoring(records, config)
    return report
