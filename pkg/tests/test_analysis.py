import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectrend.analysis import (
    SENSITIVITY_FIELDS,
    compose_score,
    emit_sensitivity_table,
    fit_factor_regression,
    influence_stats,
    verify_composition,
)
from spectrend.ingest import (
    SUITES,
    BenchmarkRecord,
    DataError,
    HardwareConfig,
    SuiteDefinition,
)

SUITE3 = SuiteDefinition(suite=2017, micro_names=("a", "b", "c"))


def _record(rid="x", suite=2017, date=300, score=None, micros=None, hw=None,
            score_norm=None):
    rec = BenchmarkRecord(record_id=rid, suite=suite, date=date, system_id=rid,
                          processor="p", hw=hw or HardwareConfig(),
                          score_speed=score, micros=dict(micros or {}))
    return rec.with_norm(score_norm) if score_norm is not None else rec


def test_compose_score_trivial():
    assert compose_score({"a": 2.0, "b": 2.0, "c": 2.0}, SUITE3) == pytest.approx(2.0)
    assert compose_score({"a": 1.0, "b": 8.0, "c": 1.0}, SUITE3) == pytest.approx(2.0)
    assert compose_score({"a": 1.0, "b": 4.0, "c": 16.0}, SUITE3) == pytest.approx(4.0)


def test_compose_score_constant_shifts_log_scale():
    shifted = SuiteDefinition(suite=2017, micro_names=("a", "b", "c"),
                              composition_constant=0.5)
    base = compose_score({"a": 2.0, "b": 3.0, "c": 4.0}, SUITE3)
    assert compose_score({"a": 2.0, "b": 3.0, "c": 4.0}, shifted) == \
        pytest.approx(base * math.exp(0.5), rel=1e-14)


def test_compose_score_exact_micro_set_required():
    with pytest.raises(DataError, match="missing micro"):
        compose_score({"a": 1.0, "b": 2.0}, SUITE3)
    with pytest.raises(DataError, match="unexpected micro"):
        compose_score({"a": 1.0, "b": 2.0, "c": 3.0, "d": 4.0}, SUITE3)
    with pytest.raises(DataError, match="must be > 0"):
        compose_score({"a": 1.0, "b": -2.0, "c": 3.0}, SUITE3)


@settings(max_examples=60)
@given(st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=3, max_size=3),
       st.sampled_from([0.5, 2.0, 10.0]))
def test_compose_score_scale_consistency(values, lam):
    micros = dict(zip(("a", "b", "c"), values))
    scaled = {k: lam * v for k, v in micros.items()}
    assert compose_score(scaled, SUITE3) == pytest.approx(
        lam * compose_score(micros, SUITE3), rel=1e-12)


def test_verify_composition_residual():
    micros = {"a": 2.0, "b": 3.0, "c": 4.0}
    exact = compose_score(micros, SUITE3)
    rec = _record(score=exact, micros=micros)
    residual, flagged = verify_composition(rec, SUITE3)
    assert abs(residual) < 1e-14 and not flagged

    doubled = _record(score=2.0 * exact, micros=micros)
    residual, flagged = verify_composition(doubled, SUITE3)
    assert residual == pytest.approx(math.log(2.0), abs=1e-12) and flagged


def test_verify_composition_fixture_unflagged(records):
    # Fixture micro ratios were constructed to reproduce the score exactly
    # up to the 6-decimal rounding stored in the CSV.
    for rec in records:
        _, flagged = verify_composition(rec, SUITES[rec.suite], tol=0.001)
        assert not flagged


def test_influence_ranks_high_variance_micro_first():
    rng = np.random.default_rng(9)
    rows = []
    for i in range(40):
        offs = {"a": rng.normal(0, 1.0), "b": rng.normal(0, 0.1),
                "c": rng.normal(0, 0.1)}
        micros = {k: math.exp(v) for k, v in offs.items()}
        rows.append(_record(rid=f"r{i}", score=compose_score(micros, SUITE3),
                            micros=micros))
    report = influence_stats(rows, 2017, SUITE3)
    assert report.micros[0].name == "a"
    assert not report.tied
    assert report.micros[0].log_variance > report.micros[1].log_variance
    for m in report.micros:
        assert m.leverage == pytest.approx(1.0 / 3.0)


def test_influence_tied_when_all_identical():
    rows = [_record(rid=f"r{i}", score=2.0,
                    micros={"a": 2.0, "b": 2.0, "c": 2.0}) for i in range(12)]
    report = influence_stats(rows, 2017, SUITE3)
    assert report.tied
    assert all(m.log_variance == 0.0 for m in report.micros)


def test_influence_fixture_top_is_libquantum(records):
    # libquantum is generated with 5x the log spread of its peers.
    report = influence_stats(records, 2006, SUITES[2006])
    assert report.micros[0].name == "libquantum"
    assert report.micros[0].log_variance > 2 * report.micros[1].log_variance


def test_influence_requires_ten_records():
    rows = [_record(rid=f"r{i}", score=2.0,
                    micros={"a": 2.0, "b": 2.0, "c": 2.0}) for i in range(9)]
    with pytest.raises(DataError, match=">= 10"):
        influence_stats(rows, 2017, SUITE3)


def _regression_records(n, sigma, seed=21):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        cores = int(rng.integers(1, 65))
        ap = bool(rng.integers(0, 2))
        y = -0.7 + 0.03 * cores + 2.2 * ap + rng.normal(0.0, sigma)
        rows.append(_record(rid=f"r{i}", score=1.0, score_norm=math.exp(y),
                            hw=HardwareConfig(cores=cores, auto_parallel=ap)))
    return rows


def test_factor_regression_recovers_zero_noise_exactly():
    reg = fit_factor_regression(_regression_records(50, 0.0))
    coef = {r.name: r.coef for r in reg.rows}
    assert coef["intercept"] == pytest.approx(-0.7, abs=1e-9)
    assert coef["cores"] == pytest.approx(0.03, abs=1e-9)
    assert coef["auto_parallel"] == pytest.approx(2.2, abs=1e-9)
    assert reg.residual_variance == pytest.approx(0.0, abs=1e-15)


def test_factor_regression_cis_cover_truth():
    reg = fit_factor_regression(_regression_records(2000, 0.3))
    truth = {"intercept": -0.7, "cores": 0.03, "auto_parallel": 2.2}
    for row in reg.rows:
        assert row.ci_low <= truth[row.name] <= row.ci_high
        assert row.ci_high - row.coef == pytest.approx(1.959964 * row.se, rel=1e-12)


def test_factor_regression_matches_normal_equations_oracle():
    rows = _regression_records(400, 0.25, seed=4)
    reg = fit_factor_regression(rows)
    X = np.column_stack([
        np.ones(len(rows)),
        [float(r.hw.cores) for r in rows],
        [1.0 if r.hw.auto_parallel else 0.0 for r in rows],
    ])
    y = np.array([math.log(r.score_norm) for r in rows])
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    resid = y - X @ beta
    s2 = float(resid @ resid) / (len(rows) - 3)
    se = np.sqrt(np.diag(s2 * np.linalg.inv(X.T @ X)))
    for row, b, s in zip(reg.rows, beta, se):
        assert row.coef == pytest.approx(b, abs=1e-9)
        assert row.se == pytest.approx(s, abs=1e-9)
        assert row.t_value == pytest.approx(b / s, abs=1e-6)


def test_factor_regression_degenerate_auto_parallel():
    rows = [_record(rid=f"r{i}", score=1.0, score_norm=2.0,
                    hw=HardwareConfig(cores=i + 1, auto_parallel=True))
            for i in range(20)]
    with pytest.raises(DataError, match="auto_parallel is constant"):
        fit_factor_regression(rows)


def test_factor_regression_text_table_shape():
    reg = fit_factor_regression(_regression_records(100, 0.1))
    lines = reg.to_text().splitlines()
    assert len(lines) == 4
    assert lines[0].startswith("Parameter")
    assert {ln.split()[0] for ln in lines[1:]} == {"intercept", "cores",
                                                   "auto_parallel"}


def test_sensitivity_table_rows_and_fields():
    rows = [
        _record(rid="a", date=100, score=2.0,
                hw=HardwareConfig(cores=4, freq_mhz=2000.0)),
        _record(rid="b", date=101, score=3.0,
                hw=HardwareConfig(cores=8, auto_parallel=True)),
        _record(rid="c", date=102),  # no score: skipped
    ]
    table = emit_sensitivity_table(rows, fields=("date", "score", "cores"))
    lines = table.splitlines()
    assert lines[0] == "date,score,cores"
    assert len(lines) == 3
    assert lines[1] == "2003-12,2.0,4"


def test_sensitivity_table_prefers_normalized_score():
    rows = [_record(rid="a", date=100, score=2.0, score_norm=5.5)]
    table = emit_sensitivity_table(rows, fields=("score",))
    assert table.splitlines()[1] == "5.5"


def test_sensitivity_table_byte_stable(records):
    assert emit_sensitivity_table(records) == emit_sensitivity_table(records)


def test_sensitivity_table_unknown_field():
    with pytest.raises(DataError, match="unknown field"):
        emit_sensitivity_table([], fields=("date", "bogus"))
    assert set(SENSITIVITY_FIELDS) >= {"date", "score", "cores"}
