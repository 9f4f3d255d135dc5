"""Statistics for citation analyses: ANOVA, OLS with dummy coding, diagnostics.

Conventions, fixed once here so every caller agrees:

* Citation counts enter models as ``log10(count + 1)``.
* Sample standard deviations use the ``n - 1`` denominator; the skewness and
  kurtosis used for diagnostics use population (``n``) moments, with kurtosis
  reported non-excess (normal ~ 3).
* Dummy coding drops the lexicographically smallest level as the reference;
  dummy columns follow lexicographic level order.
* OLS is solved by orthogonal decomposition (QR), never the explicit normal
  equations. Both error-scale conventions are reported: ``mse = RSS / n`` and
  ``residual_variance = RSS / (n - p - 1)``.
* Tail probabilities for F and t come from the regularized incomplete beta
  function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import special


# --------------------------------------------------------------------------
# distribution tails

def f_tail_probability(f_stat: float, df_num: int, df_den: int) -> float:
    """Upper-tail probability P(F >= f_stat) for the F distribution."""
    if df_num <= 0 or df_den <= 0:
        raise ValueError(f"degrees of freedom must be positive, got ({df_num}, {df_den})")
    if math.isinf(f_stat):
        return 0.0
    if f_stat <= 0.0:
        return 1.0
    x = df_den / (df_den + df_num * f_stat)
    return float(special.betainc(df_den / 2.0, df_num / 2.0, x))


def t_tail_probability(t_stat: float, df: int) -> float:
    """Upper-tail probability P(T >= t_stat) for Student's t."""
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(t_stat):
        return 0.0 if t_stat > 0 else 1.0
    x = df / (df + t_stat * t_stat)
    tail = 0.5 * float(special.betainc(df / 2.0, 0.5, x))
    return tail if t_stat >= 0.0 else 1.0 - tail


def two_tailed_t_pvalue(t_stat: float, df: int) -> float:
    return 2.0 * t_tail_probability(abs(t_stat), df)


def t_quantile(prob: float, df: int) -> float:
    """Quantile of Student's t (e.g. ``t_quantile(0.975, 2)`` ~ 4.3027)."""
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must be in (0, 1), got {prob}")
    return float(special.stdtrit(df, prob))


# --------------------------------------------------------------------------
# descriptive

def log10_plus_one(count) -> float:
    """``log10(count + 1)``; defined for all counts >= 0."""
    if count is None or count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    return math.log10(count + 1.0)


@dataclass
class DescriptiveStats:
    n: int
    mean: float
    std: float | None  # sample std (ddof=1); None when n == 1


def describe_groups(groups: Mapping[str, Sequence[float]]) -> dict[str, DescriptiveStats]:
    """Per-group n/mean/std, ordered by descending mean for reporting."""
    if not groups:
        raise ValueError("describe_groups needs at least one group")
    out = {}
    for label, values in groups.items():
        arr = np.asarray(list(values), dtype=np.float64)
        if arr.size == 0:
            raise ValueError(f"group {label!r} is empty")
        std = float(arr.std(ddof=1)) if arr.size > 1 else None
        out[label] = DescriptiveStats(n=int(arr.size), mean=float(arr.mean()), std=std)
    return dict(sorted(out.items(), key=lambda kv: -kv[1].mean))


# --------------------------------------------------------------------------
# one-way ANOVA

@dataclass
class AnovaResult:
    f_stat: float
    df_between: int
    df_within: int
    p_value: float
    eta_squared: float
    ss_between: float
    ss_within: float
    ss_total: float


def anova_oneway(groups: Mapping[str, Sequence[float]]) -> AnovaResult:
    """One-way fixed-effects ANOVA over named groups.

    Zero within-group variance with unequal means reports ``f_stat = inf``
    and ``eta_squared = 1.0`` explicitly rather than raising.
    """
    if len(groups) < 2:
        raise ValueError("ANOVA needs at least two groups")
    arrays = {}
    for label, values in groups.items():
        arr = np.asarray(list(values), dtype=np.float64)
        if arr.size < 1:
            raise ValueError(f"group {label!r} is empty")
        arrays[label] = arr
    total_n = sum(a.size for a in arrays.values())
    if total_n <= len(arrays):
        raise ValueError("ANOVA needs more observations than groups")
    grand = math.fsum(float(a.sum()) for a in arrays.values()) / total_n
    ss_between = math.fsum(a.size * (float(a.mean()) - grand) ** 2 for a in arrays.values())
    ss_within = math.fsum(float(((a - a.mean()) ** 2).sum()) for a in arrays.values())
    ss_total = ss_between + ss_within
    df_between = len(arrays) - 1
    df_within = total_n - len(arrays)
    ms_between = ss_between / df_between
    if ss_within == 0.0:
        f_stat = math.inf if ss_between > 0.0 else 0.0
    else:
        f_stat = ms_between / (ss_within / df_within)
    p_value = f_tail_probability(f_stat, df_between, df_within) if f_stat > 0 else 1.0
    eta_squared = ss_between / ss_total if ss_total > 0.0 else 0.0
    return AnovaResult(
        f_stat=float(f_stat),
        df_between=df_between,
        df_within=df_within,
        p_value=float(p_value),
        eta_squared=float(eta_squared),
        ss_between=float(ss_between),
        ss_within=float(ss_within),
        ss_total=float(ss_total),
    )


# --------------------------------------------------------------------------
# dummy coding + OLS

@dataclass
class DummyEncoding:
    reference_level: str
    column_levels: list[str]  # lexicographic, reference excluded
    matrix: np.ndarray  # (n, len(column_levels)) of 0/1


def dummy_encode(labels: Sequence[str]) -> DummyEncoding:
    """Treatment-code labels against the lexicographically smallest level."""
    labels = list(labels)
    if not labels:
        raise ValueError("dummy_encode needs at least one label")
    levels = sorted(set(labels))
    reference, columns = levels[0], levels[1:]
    matrix = np.zeros((len(labels), len(columns)), dtype=np.float64)
    index = {level: k for k, level in enumerate(columns)}
    for row, label in enumerate(labels):
        k = index.get(label)
        if k is not None:
            matrix[row, k] = 1.0
    return DummyEncoding(reference_level=reference, column_levels=columns, matrix=matrix)


@dataclass
class CoefficientStats:
    estimate: float
    standard_error: float
    t_stat: float
    p_value: float


@dataclass
class OlsResult:
    coefficients: dict[str, CoefficientStats]
    mse: float                 # RSS / n
    residual_variance: float   # RSS / (n - p - 1)
    r_squared: float
    adjusted_r_squared: float
    jarque_bera: float
    skew: float
    kurtosis: float            # non-excess; normal ~ 3
    n: int
    reference_level: str | None


def _population_moments(values: np.ndarray) -> tuple[float, float]:
    """(skew, non-excess kurtosis) with n-denominator central moments."""
    n = values.size
    if n < 2:
        raise ValueError("moments need at least two observations")
    centered = values - values.mean()
    m2 = float((centered**2).mean())
    if m2 == 0.0:
        raise ValueError("degenerate sample: zero variance")
    m3 = float((centered**3).mean())
    m4 = float((centered**4).mean())
    return m3 / m2**1.5, m4 / m2**2


def jarque_bera(sample: Sequence[float]) -> float:
    """Jarque-Bera statistic ``n/6 * (S^2 + (K - 3)^2 / 4)``."""
    arr = np.asarray(list(sample), dtype=np.float64)
    skew, kurt = _population_moments(arr)
    return arr.size / 6.0 * (skew**2 + (kurt - 3.0) ** 2 / 4.0)


def _qr_solve(design: np.ndarray, response: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(beta, (X'X)^-1) via the QR factorisation of the design matrix."""
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.min() <= design.shape[0] * np.finfo(np.float64).eps * max(diag.max(), 1.0):
        raise ValueError("design matrix is rank deficient (collinear columns)")
    r_inv = np.linalg.inv(r)
    beta = r_inv @ (q.T @ response)
    return beta, r_inv @ r_inv.T


def ols_fit(
    response: Sequence[float],
    numeric_predictors: Mapping[str, Sequence[float]] | None = None,
    categorical_predictors: Mapping[str, Sequence[str]] | None = None,
) -> OlsResult:
    """Fit an intercept-always OLS model and report inference + diagnostics.

    ``numeric_predictors`` map term names to float columns; each categorical
    predictor expands to treatment dummies per :func:`dummy_encode`, with
    columns named ``name[level]``.
    """
    y = np.asarray(list(response), dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("response must be a nonempty 1-D sequence")
    n = y.size
    names = ["Intercept"]
    columns = [np.ones(n, dtype=np.float64)]
    for name, col in (numeric_predictors or {}).items():
        arr = np.asarray(list(col), dtype=np.float64)
        if arr.shape != (n,):
            raise ValueError(f"predictor {name!r}: expected {n} values, got {arr.shape}")
        names.append(name)
        columns.append(arr)
    references = []
    for name, labels in (categorical_predictors or {}).items():
        labels = list(labels)
        if len(labels) != n:
            raise ValueError(f"predictor {name!r}: expected {n} labels, got {len(labels)}")
        enc = dummy_encode(labels)
        references.append((name, enc.reference_level))
        for k, level in enumerate(enc.column_levels):
            names.append(f"{name}[{level}]")
            columns.append(enc.matrix[:, k])
    design = np.column_stack(columns)
    k = design.shape[1]
    if n <= k:
        raise ValueError(f"need more observations ({n}) than parameters ({k})")

    beta, xtx_inv = _qr_solve(design, y)
    residuals = y - design @ beta
    rss = float(residuals @ residuals)
    tss = float(((y - y.mean()) ** 2).sum())
    df_resid = n - k
    residual_variance = rss / df_resid
    r_squared = 1.0 - rss / tss if tss > 0.0 else 1.0
    adjusted = 1.0 - (1.0 - r_squared) * (n - 1) / df_resid

    se = np.sqrt(residual_variance * np.diag(xtx_inv))
    coefficients = {}
    for j, name in enumerate(names):
        if se[j] == 0.0:
            t_stat = math.inf if beta[j] > 0 else (-math.inf if beta[j] < 0 else 0.0)
        else:
            t_stat = float(beta[j] / se[j])
        coefficients[name] = CoefficientStats(
            estimate=float(beta[j]),
            standard_error=float(se[j]),
            t_stat=t_stat,
            p_value=two_tailed_t_pvalue(t_stat, df_resid),
        )

    try:
        skew, kurt = _population_moments(residuals)
        jb = n / 6.0 * (skew**2 + (kurt - 3.0) ** 2 / 4.0)
    except ValueError:  # perfect fit: all residuals zero
        skew, kurt, jb = 0.0, 0.0, 0.0

    if references:
        reference_level = (
            references[0][1]
            if len(references) == 1
            else "; ".join(f"{name}={level}" for name, level in references)
        )
    else:
        reference_level = None

    return OlsResult(
        coefficients=coefficients,
        mse=rss / n,
        residual_variance=residual_variance,
        r_squared=float(r_squared),
        adjusted_r_squared=float(adjusted),
        jarque_bera=float(jb),
        skew=float(skew),
        kurtosis=float(kurt),
        n=n,
        reference_level=reference_level,
    )


# --------------------------------------------------------------------------
# trends and per-field regression lines

@dataclass
class TrendPoint:
    group: str
    year: int
    mean: float
    ci95_low: float
    ci95_high: float
    n: int


def trend_by_year(observations: Iterable[tuple[str, int, float]]) -> list[TrendPoint]:
    """Group means by (group, year) with t-based 95% confidence intervals.

    Single-observation cells are degenerate: the interval collapses to the
    mean (visible via ``n == 1``).
    """
    cells: dict[tuple[str, int], list[float]] = {}
    for group, year, value in observations:
        cells.setdefault((str(group), int(year)), []).append(float(value))
    if not cells:
        raise ValueError("trend_by_year needs at least one observation")
    points = []
    for (group, year), values in sorted(cells.items()):
        arr = np.asarray(values, dtype=np.float64)
        mean = float(arr.mean())
        if arr.size == 1:
            low = high = mean
        else:
            half = t_quantile(0.975, arr.size - 1) * float(arr.std(ddof=1)) / math.sqrt(arr.size)
            low, high = mean - half, mean + half
        points.append(
            TrendPoint(group=group, year=year, mean=mean, ci95_low=low, ci95_high=high, n=int(arr.size))
        )
    return points


@dataclass
class FieldLine:
    field: str
    slope: float
    intercept: float
    dsi: np.ndarray        # evaluation grid over the field's observed range
    fit: np.ndarray        # mean response on the grid
    ci95_low: np.ndarray
    ci95_high: np.ndarray


def regression_line_per_field(
    dsi_values: Sequence[float],
    field_labels: Sequence[str],
    response: Sequence[float],
    grid_points: int = 100,
    per_field_refit: bool = False,
) -> list[FieldLine]:
    """Per-field fitted line and 95% mean-response band.

    By default a single joint model (shared DSI slope, field intercepts) is
    fitted and evaluated per field; ``per_field_refit=True`` instead fits an
    independent simple regression within each field. Each field needs at
    least three points.
    """
    x = np.asarray(list(dsi_values), dtype=np.float64)
    y = np.asarray(list(response), dtype=np.float64)
    labels = [str(l) for l in field_labels]
    if not (x.shape == y.shape and x.ndim == 1 and len(labels) == x.size):
        raise ValueError("dsi_values, field_labels and response must have equal length")
    if grid_points < 2:
        raise ValueError(f"grid_points must be >= 2, got {grid_points}")
    fields = sorted(set(labels))
    rows_by_field = {f: np.asarray([i for i, l in enumerate(labels) if l == f]) for f in fields}
    for f, rows in rows_by_field.items():
        if rows.size < 3:
            raise ValueError(f"field {f!r} has {rows.size} points; need >= 3")

    lines: list[FieldLine] = []
    if per_field_refit:
        for f in fields:
            rows = rows_by_field[f]
            lines.append(_refit_field_line(f, x[rows], y[rows], grid_points))
        return lines

    enc = dummy_encode(labels) if len(fields) > 1 else None
    dummies = enc.matrix if enc is not None else np.empty((x.size, 0))
    design = np.column_stack([np.ones(x.size), x, dummies])
    if x.size <= design.shape[1]:
        raise ValueError("not enough observations for the joint model")
    beta, xtx_inv = _qr_solve(design, y)
    residuals = y - design @ beta
    sigma2 = float(residuals @ residuals) / (x.size - design.shape[1])
    t_crit = t_quantile(0.975, x.size - design.shape[1])
    for f in fields:
        rows = rows_by_field[f]
        grid = np.linspace(float(x[rows].min()), float(x[rows].max()), grid_points)
        dummy_row = np.zeros(dummies.shape[1])
        if enc is not None and f != enc.reference_level:
            dummy_row[enc.column_levels.index(f)] = 1.0
        points = np.column_stack(
            [np.ones(grid_points), grid, np.tile(dummy_row, (grid_points, 1))]
        )
        fit = points @ beta
        half = t_crit * np.sqrt(np.maximum(sigma2 * np.sum((points @ xtx_inv) * points, axis=1), 0.0))
        intercept = float(beta[0] + (dummy_row @ beta[2:] if dummy_row.size else 0.0))
        lines.append(
            FieldLine(
                field=f,
                slope=float(beta[1]),
                intercept=intercept,
                dsi=grid,
                fit=fit,
                ci95_low=fit - half,
                ci95_high=fit + half,
            )
        )
    return lines


def _refit_field_line(field: str, x: np.ndarray, y: np.ndarray, grid_points: int) -> FieldLine:
    """Independent per-field simple regression with its own band."""
    design = np.column_stack([np.ones(x.size), x])
    if x.size <= 2:
        raise ValueError(f"field {field!r}: refit needs more than 2 points")
    beta, xtx_inv = _qr_solve(design, y)
    residuals = y - design @ beta
    sigma2 = float(residuals @ residuals) / (x.size - 2)
    t_crit = t_quantile(0.975, x.size - 2)
    grid = np.linspace(float(x.min()), float(x.max()), grid_points)
    points = np.column_stack([np.ones(grid_points), grid])
    fit = points @ beta
    half = t_crit * np.sqrt(np.maximum(sigma2 * np.sum((points @ xtx_inv) * points, axis=1), 0.0))
    return FieldLine(
        field=field,
        slope=float(beta[1]),
        intercept=float(beta[0]),
        dsi=grid,
        fit=fit,
        ci95_low=fit - half,
        ci95_high=fit + half,
    )
