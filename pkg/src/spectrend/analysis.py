"""Score composition, microbenchmark influence, and system-factor regression.

The overall score of a suite is the geometric mean of its micro ratios; on
the log scale the composition is an equal-weight average plus a constant.
This module checks that identity on real rows, ranks micros by how much
their variability moves the overall score, and quantifies core-count and
auto-parallel effects with an OLS coefficient table.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .ingest import BenchmarkRecord, DataError, SuiteDefinition, format_month

__all__ = [
    "MicroInfluence",
    "InfluenceReport",
    "FactorRegression",
    "compose_score",
    "verify_composition",
    "influence_stats",
    "fit_factor_regression",
    "emit_sensitivity_table",
]

SENSITIVITY_FIELDS = ("date", "score", "cores", "freq_mhz", "l3_kb",
                      "threads_per_core", "auto_parallel")


def compose_score(micros: dict[str, float], suite_def: SuiteDefinition) -> float:
    """Overall score = geometric mean of the suite's micro ratios."""
    got, want = set(micros), set(suite_def.micro_names)
    if got != want:
        missing = sorted(want - got)
        extra = sorted(got - want)
        parts = []
        if missing:
            parts.append(f"missing micro(s) {missing}")
        if extra:
            parts.append(f"unexpected micro(s) {extra}")
        raise DataError("; ".join(parts))
    for name, ratio in micros.items():
        if ratio <= 0:
            raise DataError(f"micro {name!r}: ratio must be > 0, got {ratio}")
    log_sum = math.fsum(math.log(micros[m]) for m in suite_def.micro_names)
    return math.exp(log_sum / suite_def.p + suite_def.composition_constant)


def verify_composition(record: BenchmarkRecord, suite_def: SuiteDefinition,
                       tol: float = 0.02):
    """Residual of the log-scale composition identity for one record.

    Returns ``(residual, flagged)`` where ``flagged`` is True when
    ``|residual| > tol``.  Published scores are rounded, so small residuals
    are expected on real rows.
    """
    if record.score_speed is None:
        raise DataError(f"record {record.record_id!r} has no speed score")
    micros = {m: record.micros[m] for m in suite_def.micro_names if m in record.micros}
    expected = math.log(compose_score(micros, suite_def))
    residual = math.log(record.score_speed) - expected
    return residual, abs(residual) > tol


@dataclass(frozen=True)
class MicroInfluence:
    name: str
    log_variance: float
    log_range: float
    slope: float          # OLS slope of log overall on log micro
    correlation: float    # Pearson, log overall vs log micro
    leverage: float       # composition weight, 1/p


@dataclass(frozen=True)
class InfluenceReport:
    suite: int
    n_records: int
    micros: tuple[MicroInfluence, ...]   # ranked by log variance, descending
    tied: bool                           # all variances equal; ranking arbitrary

    def to_json(self) -> str:
        return json.dumps({
            "suite": self.suite,
            "n_records": self.n_records,
            "tied": self.tied,
            "micros": [vars(m) for m in self.micros],
        }, sort_keys=True)


def influence_stats(records: list[BenchmarkRecord], suite: int,
                    suite_def: SuiteDefinition) -> InfluenceReport:
    """Per-micro variability and association with the overall score.

    Micros are ranked by variance of the log ratio; because each micro
    enters the composition with equal weight 1/p, a micro with outsized
    spread moves the overall score more than its peers.
    """
    rows = [r for r in records
            if r.suite == suite and r.score_speed is not None
            and set(r.micros) >= set(suite_def.micro_names)]
    if len(rows) < 10:
        raise DataError(f"need >= 10 records with full micro sets, got {len(rows)}")

    log_overall = np.array([math.log(r.score_speed) for r in rows])
    entries = []
    for name in suite_def.micro_names:
        log_micro = np.array([math.log(r.micros[name]) for r in rows])
        variance = float(np.var(log_micro))
        rng = float(np.ptp(log_micro))
        if variance == 0:
            slope, corr = 0.0, 0.0
        else:
            slope = float(np.cov(log_micro, log_overall, bias=True)[0, 1] / variance)
            denom = math.sqrt(variance * float(np.var(log_overall)))
            corr = 0.0 if denom == 0 else float(
                np.cov(log_micro, log_overall, bias=True)[0, 1] / denom)
        entries.append(MicroInfluence(
            name=name, log_variance=variance, log_range=rng,
            slope=slope, correlation=max(-1.0, min(1.0, corr)),
            leverage=1.0 / suite_def.p))

    entries.sort(key=lambda m: (-m.log_variance, m.name))
    variances = {m.log_variance for m in entries}
    return InfluenceReport(suite=suite, n_records=len(rows),
                           micros=tuple(entries), tied=len(variances) == 1)


@dataclass(frozen=True)
class CoefficientRow:
    name: str
    coef: float
    se: float
    t_value: float
    p_value: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class FactorRegression:
    rows: tuple[CoefficientRow, ...]
    residual_variance: float
    n: int

    def to_json(self) -> str:
        return json.dumps({
            "n": self.n,
            "residual_variance": self.residual_variance,
            "coefficients": [vars(r) for r in self.rows],
        }, sort_keys=True)

    def to_text(self) -> str:
        """Aligned coefficient table (Parameter, Coef., SE, t, p, 95% CI)."""
        header = f"{'Parameter':<14}{'Coef.':>10}{'SE':>9}{'t-val':>10}{'p-val':>8}{'CI lo':>9}{'CI hi':>9}"
        lines = [header]
        for r in self.rows:
            lines.append(
                f"{r.name:<14}{r.coef:>10.4f}{r.se:>9.3f}{r.t_value:>10.3f}"
                f"{r.p_value:>8.3f}{r.ci_low:>9.3f}{r.ci_high:>9.3f}")
        return "\n".join(lines)


_Z_975 = 1.959964


def fit_factor_regression(records: list[BenchmarkRecord]) -> FactorRegression:
    """OLS of log normalized speed score on core count and auto-parallel.

    Frequency is deliberately left out: it is collinear with the other
    factors over this data.  p-values use the normal approximation for
    n > 200 and Student-t below that.
    """
    rows = [r for r in records
            if r.score_norm is not None and r.hw.cores is not None
            and r.hw.auto_parallel is not None]
    if len(rows) < 4:
        raise DataError(f"need >= 4 usable records, got {len(rows)}")
    ap = np.array([1.0 if r.hw.auto_parallel else 0.0 for r in rows])
    if np.ptp(ap) == 0:
        raise DataError("degenerate predictor: auto_parallel is constant")

    y = np.array([math.log(r.score_norm) for r in rows])
    X = np.column_stack([np.ones(len(rows)),
                         np.array([float(r.hw.cores) for r in rows]),
                         ap])
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    dof = len(rows) - 3
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))

    out = []
    for name, b, s in zip(("intercept", "cores", "auto_parallel"), beta, se):
        t = float(b / s)
        if len(rows) > 200:
            p = 2.0 * float(stats.norm.sf(abs(t)))
        else:
            p = 2.0 * float(stats.t.sf(abs(t), dof))
        out.append(CoefficientRow(name=name, coef=float(b), se=float(s),
                                  t_value=t, p_value=p,
                                  ci_low=float(b - _Z_975 * s),
                                  ci_high=float(b + _Z_975 * s)))
    return FactorRegression(rows=tuple(out), residual_variance=s2, n=len(rows))


def emit_sensitivity_table(records: list[BenchmarkRecord],
                           fields: tuple[str, ...] = SENSITIVITY_FIELDS) -> str:
    """Long-format CSV (one row per scored record) for external plotting."""
    unknown = [f for f in fields if f not in SENSITIVITY_FIELDS]
    if unknown:
        raise DataError(f"unknown field(s) {unknown}; choose from {list(SENSITIVITY_FIELDS)}")

    def cell(rec, field):
        if field == "date":
            return format_month(rec.date)
        if field == "score":
            return repr(rec.score_norm if rec.score_norm is not None else rec.score_speed)
        value = getattr(rec.hw, field)
        if value is None:
            return ""
        if field == "auto_parallel":
            return "1" if value else "0"
        return repr(value)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for rec in records:
        if rec.score_speed is None and rec.score_norm is None:
            continue
        writer.writerow([cell(rec, f) for f in fields])
    return buf.getvalue()
