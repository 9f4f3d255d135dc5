"""Command-line interface.

Subcommands::

    segment        corpus records -> per-record sentence lists (JSONL)
    filter         space-count + year exclusion gates, optional field mapping
    sample         seeded per-subject sampling (optionally per-year, top-N subjects)
    score          run the scoring pipeline, JSONL scored records out
    analyze-anova  one-way ANOVA of DSI by field
    analyze-ols    OLS of log10(cit5+1) on DSI + field dummies
    trend          per (field, year) DSI means with 95% CIs (CSV)
    plotdata       plot-ready CSV tables: violin | trend | regression | boxplot
    benchmark      synthetic-corpus timing report (JSON)

Results go to stdout or ``--out``; diagnostics go to stderr. Exit codes:
0 success, 1 usage/validation error, 2 data error. Any flag may also be set
in an optional ``--config`` file of ``key=value`` lines; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import asdict

import numpy as np

from . import corpus as corpus_mod
from .corpus import (
    filter_records,
    ingest,
    load_field_mapping,
    load_scores,
    map_fields,
    persist_scores,
    sample_per_subject,
    top_subjects,
    write_records,
)
from .dsi import MEAN_OF_PAIRS, SUM_OVER_4N, DsiConfig
from .embeddings import (
    MockEmbeddingProvider,
    OnnxEmbeddingProvider,
    PrecomputedEmbeddingProvider,
)
from .errors import DsibibError
from .pipeline import PipelineConfig, benchmark, resume, run_scoring
from .segmentation import compose_narrative, segment
from .stats import (
    anova_oneway,
    describe_groups,
    log10_plus_one,
    ols_fit,
    regression_line_per_field,
    trend_by_year,
)

logger = logging.getLogger(__name__)

_NORMALIZATION_ALIASES = {
    "mean": MEAN_OF_PAIRS,
    "paper4n": SUM_OVER_4N,
    "4n": SUM_OVER_4N,
}


class UsageError(Exception):
    """Bad flags or flag combinations; maps to exit code 1."""


class DataError(DsibibError):
    """Bad data reachable only at run time; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; we reserve 2 for data
        raise UsageError(message)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _layer_list(text: str) -> tuple[int, ...]:
    try:
        layers = tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad layer list {text!r}; expected e.g. 6,7")
    if not layers:
        raise argparse.ArgumentTypeError("layer list is empty")
    return layers


def build_parser() -> _Parser:
    parser = _Parser(prog="dsibib", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    common = _Parser(add_help=False)
    common.add_argument("--input", help="input file (corpus records or scored records)")
    common.add_argument("--out", help="write results here instead of stdout")
    common.add_argument("--config", help="key=value defaults file; explicit flags win")
    common.add_argument(
        "--format",
        choices=("jsonl", "csv"),
        help="corpus record format for --input (and record outputs); default jsonl",
    )

    p = sub.add_parser("segment", parents=[common], help="emit per-record sentence lists")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("filter", parents=[common], help="length/year gates, optional field mapping")
    p.add_argument("--min-spaces", type=int, help="inclusive lower space-count bound (default 199)")
    p.add_argument("--max-spaces", type=int, help="inclusive upper space-count bound (default 299)")
    p.add_argument(
        "--exclude-year",
        type=int,
        action="append",
        help="drop records published in this year (repeatable)",
    )
    p.add_argument("--mapping", help="subject,field CSV used to attach field labels")
    p.add_argument(
        "--strict-mapping",
        action="store_true",
        default=None,
        help="fail on unmapped subjects instead of excluding them",
    )
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("sample", parents=[common], help="seeded per-subject sampling")
    p.add_argument("--per-subject", type=_positive_int, help="records to draw per subject")
    p.add_argument(
        "--per-year",
        action="store_true",
        default=None,
        help="stratify the per-subject quota evenly over publication years",
    )
    p.add_argument("--seed", type=int, help="sampling seed (default 0)")
    p.add_argument(
        "--top-subjects",
        type=_positive_int,
        help="first keep only the N largest subjects by record count",
    )
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("score", parents=[common], help="score records with the pipeline")
    p.add_argument(
        "--provider",
        choices=("mock", "precomputed", "model"),
        help="embedding backend (default mock)",
    )
    p.add_argument(
        "--embeddings",
        help="embedding store (precomputed provider) or model file (model provider)",
    )
    p.add_argument("--dim", type=_positive_int, help="mock embedding dimension (default 768)")
    p.add_argument("--layers", type=_layer_list, help="encoder layers to combine, e.g. 6,7")
    p.add_argument(
        "--normalization",
        choices=sorted(_NORMALIZATION_ALIASES),
        help="score normalization: mean (pair count) or paper4n (divide by 4*n)",
    )
    p.add_argument("--parallelism", type=_positive_int, help="worker processes (default 1)")
    p.add_argument("--checkpoint", help="append scored records here as they complete")
    p.add_argument(
        "--resume",
        action="store_true",
        default=None,
        help="reuse results already present in --checkpoint",
    )
    p.add_argument(
        "--seed",
        type=int,
        help="reserved for stochastic providers; built-in providers are deterministic",
    )
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("analyze-anova", parents=[common], help="one-way ANOVA of DSI by field")
    p.set_defaults(func=_cmd_anova)

    p = sub.add_parser("analyze-ols", parents=[common], help="OLS of log10(cit5+1) on DSI + field")
    p.add_argument(
        "--cutoff-year",
        type=int,
        help="keep records published in or before this year (default 2018)",
    )
    p.set_defaults(func=_cmd_ols)

    p = sub.add_parser("trend", parents=[common], help="per (field, year) DSI means with 95%% CIs")
    p.set_defaults(func=_cmd_trend)

    p = sub.add_parser("plotdata", parents=[common], help="plot-ready CSV tables")
    p.add_argument(
        "--kind",
        choices=("violin", "trend", "regression", "boxplot"),
        required=True,
        help="which table to emit",
    )
    p.add_argument(
        "--cutoff-year",
        type=int,
        help="regression kind: keep records published in or before this year (default 2018)",
    )
    p.add_argument(
        "--per-field-refit",
        action="store_true",
        default=None,
        help="regression kind: fit each field separately instead of the joint model",
    )
    p.set_defaults(func=_cmd_plotdata)

    p = sub.add_parser("benchmark", parents=[common], help="synthetic-corpus timing report")
    p.add_argument("--n-records", type=_positive_int, help="corpus size (default 1000)")
    p.add_argument("--sentences", type=_positive_int, help="sentences per record (default 15)")
    p.add_argument("--dim", type=_positive_int, help="mock embedding dimension (default 768)")
    p.add_argument("--parallelism", type=_positive_int, help="worker processes (default 1)")
    p.set_defaults(func=_cmd_benchmark)

    return parser


# --------------------------------------------------------------------------
# config file + flag resolution

def _load_config(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class _Flags:
    """Effective flag values: explicit CLI flag, else config file, else default."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = _load_config(getattr(args, "config", None))

    def get(self, name: str, default=None, cast=str):
        explicit = getattr(self.args, name, None)
        if explicit is not None:
            return explicit
        if name in self.config:
            raw = self.config[name]
            try:
                return cast(raw)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {name}: bad value {raw!r} ({exc})")
        return default

    def get_bool(self, name: str, default: bool = False) -> bool:
        def _parse(raw: str) -> bool:
            lowered = raw.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")

        return bool(self.get(name, default, _parse))

    def get_int_list(self, name: str, default=()) -> list[int]:
        explicit = getattr(self.args, name, None)
        if explicit is not None:
            return list(explicit)
        if name in self.config:
            raw = self.config[name]
            try:
                return [int(part) for part in raw.split(",") if part.strip() != ""]
            except ValueError:
                raise UsageError(f"config key {name}: bad integer list {raw!r}")
        return list(default)


@contextmanager
def _out_stream(flags: _Flags):
    path = flags.get("out")
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh
    else:
        yield sys.stdout


def _read_records(flags: _Flags) -> list[corpus_mod.CorpusRecord]:
    path = flags.get("input")
    if not path:
        raise UsageError("--input is required")
    fmt = flags.get("format", "jsonl")
    return ingest(path, fmt=fmt).records


def _read_scores(flags: _Flags) -> list[corpus_mod.ScoredRecord]:
    path = flags.get("input")
    if not path:
        raise UsageError("--input is required")
    return load_scores(path)


def _usable_scores(
    scored,
    need_field: bool = False,
    need_cit5: bool = False,
    cutoff_year: int | None = None,
):
    """Scored (non-skipped) records, optionally windowed, with column checks."""
    usable = [sr for sr in scored if sr.dsi is not None]
    if cutoff_year is not None:
        usable = [sr for sr in usable if sr.record.publication_year <= cutoff_year]
    if not usable:
        raise DataError("no scored records to analyze")
    if need_field:
        bad = next((sr.record.id for sr in usable if sr.record.field is None), None)
        if bad is not None:
            raise DataError(
                f"record {bad!r} has no field label; attach one with "
                "'filter --mapping subjects.csv' before scoring"
            )
    if need_cit5:
        bad = next((sr.record.id for sr in usable if sr.record.cit5 is None), None)
        if bad is not None:
            raise DataError(f"record {bad!r} is missing the cit5 column")
    return usable


def _write_csv(stream, header: list[str], rows) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)


def _fmt(value: float) -> str:
    return f"{value:.6g}"


# --------------------------------------------------------------------------
# subcommands

def _cmd_segment(args) -> int:
    flags = _Flags(args)
    records = _read_records(flags)
    with _out_stream(flags) as out:
        for record in records:
            sentences = segment(
                compose_narrative(record.title, record.abstract), source_id=record.id
            )
            out.write(
                json.dumps(
                    {
                        "id": record.id,
                        "n_sentences": len(sentences),
                        "sentences": sentences.sentences,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    logger.info("segmented %d records", len(records))
    return 0


def _cmd_filter(args) -> int:
    flags = _Flags(args)
    min_spaces = flags.get("min_spaces", 199, int)
    max_spaces = flags.get("max_spaces", 299, int)
    if min_spaces > max_spaces:
        raise UsageError(f"--min-spaces {min_spaces} exceeds --max-spaces {max_spaces}")
    records = _read_records(flags)
    kept = filter_records(
        records,
        min_spaces=min_spaces,
        max_spaces=max_spaces,
        exclude_years=flags.get_int_list("exclude_year"),
    )
    mapping_path = flags.get("mapping")
    if mapping_path:
        mapping = load_field_mapping(mapping_path)
        kept, unmapped = map_fields(kept, mapping, strict=flags.get_bool("strict_mapping"))
        for subject, count in unmapped.items():
            logger.warning("unmapped subject %r: excluded %d records", subject, count)
    _emit_records(flags, kept)
    logger.info("kept %d of %d records", len(kept), len(records))
    return 0


def _emit_records(flags: _Flags, records) -> None:
    fmt = flags.get("format", "jsonl")
    path = flags.get("out")
    write_records(records, path if path else sys.stdout, fmt=fmt)


def _cmd_sample(args) -> int:
    flags = _Flags(args)
    n = flags.get("per_subject", None, int)
    if n is None:
        raise UsageError("--per-subject is required")
    records = _read_records(flags)
    top_n = flags.get("top_subjects", None, int)
    if top_n is not None:
        records = top_subjects(records, top_n)
    sampled = sample_per_subject(
        records,
        n_per_subject=n,
        seed=flags.get("seed", 0, int),
        per_year=flags.get_bool("per_year"),
    )
    _emit_records(flags, sampled)
    logger.info("sampled %d records from %d", len(sampled), len(records))
    return 0


def _build_provider(flags: _Flags):
    name = flags.get("provider", "mock")
    if name == "mock":
        return MockEmbeddingProvider(dimension=flags.get("dim", 768, int))
    store = flags.get("embeddings")
    if not store:
        raise UsageError(f"--provider {name} requires --embeddings")
    if name == "precomputed":
        return PrecomputedEmbeddingProvider(store)
    return OnnxEmbeddingProvider(store)


def _cmd_score(args) -> int:
    flags = _Flags(args)
    records = _read_records(flags)
    dsi_config = DsiConfig(
        layers=flags.get("layers", (6, 7), _layer_list),
        normalization=_NORMALIZATION_ALIASES[flags.get("normalization", "mean")],
    )
    pipeline_config = PipelineConfig(
        provider=_build_provider(flags),
        dsi_config=dsi_config,
        parallelism=flags.get("parallelism", 1, int),
        checkpoint_path=flags.get("checkpoint"),
    )
    if flags.get_bool("resume"):
        if not pipeline_config.checkpoint_path:
            raise UsageError("--resume requires --checkpoint")
        scored, report = resume(records, pipeline_config)
    else:
        scored, report = run_scoring(records, pipeline_config)
    path = flags.get("out")
    if path:
        persist_scores(scored, path)
    else:
        for sr in scored:
            sys.stdout.write(corpus_mod.score_record_to_line(sr) + "\n")
    logger.info("run report: %s", report.to_json())
    return 0


def _write_json_mirror(flags: _Flags, result) -> None:
    """Machine-readable companion file mirroring the result dataclass fields."""
    path = flags.get("out")
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(asdict(result)) + "\n")


def _cmd_anova(args) -> int:
    flags = _Flags(args)
    usable = _usable_scores(_read_scores(flags), need_field=True)
    groups: dict[str, list[float]] = {}
    for sr in usable:
        groups.setdefault(sr.record.field, []).append(sr.dsi.value)
    result = anova_oneway(groups)
    descriptives = describe_groups(groups)
    out = sys.stdout
    out.write("One-way ANOVA of DSI by field\n")
    out.write(f"  groups = {len(groups)}, observations = {result.df_within + len(groups)}\n")
    out.write(
        f"  F({result.df_between}, {result.df_within}) = {_fmt(result.f_stat)}, "
        f"p = {result.p_value:.3e}, eta^2 = {_fmt(result.eta_squared)}\n"
    )
    out.write("  field means (descending):\n")
    for label, st in descriptives.items():
        spread = "n/a" if st.std is None else _fmt(st.std)
        out.write(f"    {label}: n={st.n} mean={_fmt(st.mean)} std={spread}\n")
    _write_json_mirror(flags, result)
    return 0


def _cmd_ols(args) -> int:
    flags = _Flags(args)
    cutoff = flags.get("cutoff_year", 2018, int)
    usable = _usable_scores(
        _read_scores(flags), need_field=True, need_cit5=True, cutoff_year=cutoff
    )
    response = [log10_plus_one(sr.record.cit5) for sr in usable]
    result = ols_fit(
        response,
        numeric_predictors={"dsi": [sr.dsi.value for sr in usable]},
        categorical_predictors={"field": [sr.record.field for sr in usable]},
    )
    out = sys.stdout
    out.write("OLS: log10(cit5 + 1) ~ dsi + field\n")
    out.write(
        f"  n = {result.n}, cutoff_year <= {cutoff}, reference field = {result.reference_level}\n"
    )
    out.write(f"  {'term':<28}{'estimate':>12}{'std.err':>12}{'t':>10}{'p':>12}\n")
    for name, coef in result.coefficients.items():
        out.write(
            f"  {name:<28}{coef.estimate:>12.6f}{coef.standard_error:>12.6f}"
            f"{coef.t_stat:>10.3f}{coef.p_value:>12.3e}\n"
        )
    out.write(
        f"  mse = {_fmt(result.mse)}, residual_variance = {_fmt(result.residual_variance)}\n"
    )
    out.write(
        f"  R^2 = {_fmt(result.r_squared)}, adjusted R^2 = {_fmt(result.adjusted_r_squared)}\n"
    )
    out.write(
        f"  residuals: skew = {_fmt(result.skew)}, kurtosis = {_fmt(result.kurtosis)}, "
        f"JB = {_fmt(result.jarque_bera)}\n"
    )
    _write_json_mirror(flags, result)
    return 0


def _trend_rows(usable):
    points = trend_by_year(
        (sr.record.field, sr.record.publication_year, sr.dsi.value) for sr in usable
    )
    return [
        [p.group, p.year, repr(p.mean), repr(p.ci95_low), repr(p.ci95_high), p.n]
        for p in points
    ]


def _cmd_trend(args) -> int:
    flags = _Flags(args)
    usable = _usable_scores(_read_scores(flags), need_field=True)
    with _out_stream(flags) as out:
        _write_csv(out, ["group", "year", "mean", "ci95_low", "ci95_high", "n"], _trend_rows(usable))
    return 0


def _box_stats(values: np.ndarray):
    """Tukey box stats: quartiles, 1.5*IQR fences, outlier mask, trimmed mean."""
    q1, median, q3 = (float(q) for q in np.percentile(values, [25, 50, 75]))
    iqr = q3 - q1
    low_fence, high_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    outliers = (values < low_fence) | (values > high_fence)
    inliers = values[~outliers]
    whisker_low = float(inliers.min()) if inliers.size else q1
    whisker_high = float(inliers.max()) if inliers.size else q3
    mean_excl = float(inliers.mean()) if inliers.size else float("nan")
    return q1, median, q3, iqr, whisker_low, whisker_high, outliers, mean_excl


def _distribution_rows(usable, group_key):
    cells: dict[str, list] = {}
    for sr in usable:
        cells.setdefault(group_key(sr), []).append(sr)
    rows = []
    for group in sorted(cells):
        members = cells[group]
        values = np.asarray([sr.dsi.value for sr in members], dtype=np.float64)
        q1, median, q3, iqr, wlo, whi, outliers, mean_excl = _box_stats(values)
        for sr, is_out in zip(members, outliers):
            rows.append(
                [
                    group,
                    sr.record.primary_subject,
                    repr(sr.dsi.value),
                    repr(q1),
                    repr(median),
                    repr(q3),
                    repr(iqr),
                    repr(wlo),
                    repr(whi),
                    int(is_out),
                    repr(mean_excl),
                ]
            )
    return rows


_DISTRIBUTION_HEADER = [
    "group",
    "subject",
    "dsi",
    "q1",
    "median",
    "q3",
    "iqr",
    "whisker_low",
    "whisker_high",
    "is_outlier",
    "mean_excl_outliers",
]


def _cmd_plotdata(args) -> int:
    flags = _Flags(args)
    kind = flags.get("kind")
    scored = _read_scores(flags)
    with _out_stream(flags) as out:
        if kind == "violin":
            usable = _usable_scores(scored, need_field=True)
            _write_csv(out, _DISTRIBUTION_HEADER, _distribution_rows(usable, lambda sr: sr.record.field))
        elif kind == "boxplot":
            usable = _usable_scores(scored)
            _write_csv(
                out, _DISTRIBUTION_HEADER, _distribution_rows(usable, lambda sr: sr.record.primary_subject)
            )
        elif kind == "trend":
            usable = _usable_scores(scored, need_field=True)
            _write_csv(out, ["group", "year", "mean", "ci95_low", "ci95_high", "n"], _trend_rows(usable))
        else:  # regression
            cutoff = flags.get("cutoff_year", 2018, int)
            usable = _usable_scores(scored, need_field=True, need_cit5=True, cutoff_year=cutoff)
            lines = regression_line_per_field(
                [sr.dsi.value for sr in usable],
                [sr.record.field for sr in usable],
                [log10_plus_one(sr.record.cit5) for sr in usable],
                per_field_refit=flags.get_bool("per_field_refit"),
            )
            rows = []
            for line in lines:
                for g, fit, lo, hi in zip(line.dsi, line.fit, line.ci95_low, line.ci95_high):
                    rows.append(
                        [
                            line.field,
                            repr(float(g)),
                            repr(float(fit)),
                            repr(float(lo)),
                            repr(float(hi)),
                            repr(line.slope),
                            repr(line.intercept),
                        ]
                    )
            _write_csv(
                out,
                ["field", "dsi", "fit", "ci95_low", "ci95_high", "slope", "intercept"],
                rows,
            )
    return 0


def _cmd_benchmark(args) -> int:
    flags = _Flags(args)
    report = benchmark(
        n_records=flags.get("n_records", 1000, int),
        sentences_per_record=flags.get("sentences", 15, int),
        dimension=flags.get("dim", 768, int),
        parallelism=flags.get("parallelism", 1, int),
    )
    with _out_stream(flags) as out:
        out.write(report.to_json() + "\n")
    return 0


# --------------------------------------------------------------------------

def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DsibibError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
