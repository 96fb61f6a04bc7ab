"""Scenario forecasting: trend plus GP residual per candidate configuration.

For a future month, enumerate the feasible hardware configurations implied
by the quantile forecasts, predict each one's log score as trend mean plus
GP residual, then report the configuration realizing a requested quantile
of those predictions together with its 95% interval.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

from .gp import GpModel, extrapolation_warning, gp_predict
from .hwforecast import FeasibleRegion, QuantileLine, enumerate_configs, predict_factor_quantiles
from .ingest import DataError, HardwareConfig, format_month
from .trend import TrendModel, Z_975, trend_mean, trend_variance

__all__ = [
    "ScenarioBound",
    "predict_individual",
    "scenario_bound",
    "scenario_sweep",
    "sweep_to_csv",
    "sweep_to_json",
]

DEFAULT_QS = (0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class ScenarioBound:
    t: int
    q: float
    config: HardwareConfig
    mean_log_score: float
    variance: float
    pi95: tuple[float, float]
    warnings: tuple[str, ...] = ()


def predict_individual(trend: TrendModel, gp: GpModel, t: int,
                       x: HardwareConfig):
    """Mean and variance of one machine's log score at time t.

    Additive decomposition: trend mean plus GP residual mean; trend
    delta-method variance plus GP predictive variance.  Returns
    ``(mean, variance, warning_or_None)``; extrapolating beyond the GP's
    training support warns rather than failing, since forecasting is the
    whole point.
    """
    if t < 0:
        raise DataError("t must be >= 0")
    resid_mean, resid_var = gp_predict(gp, x)
    mean = trend_mean(trend, t) + resid_mean
    var = trend_variance(trend, t) + resid_var
    return mean, var, extrapolation_warning(gp, x)


def _config_key(cfg: HardwareConfig):
    return (cfg.cores, cfg.freq_mhz, cfg.l3_kb, cfg.threads_per_core)


def scenario_bound(trend: TrendModel, gp: GpModel,
                   lines: list[QuantileLine], region: FeasibleRegion,
                   t: int, q: float) -> ScenarioBound:
    """Prediction bound for the qth-quantile machine at month t.

    The quantile over the finite prediction set is lower nearest rank, so
    a concrete configuration realizes it; ties resolve to the smallest
    configuration in the deterministic enumeration order.
    """
    if not 0 < q < 1:
        raise DataError(f"q must be in (0, 1), got {q}")
    quantiles = predict_factor_quantiles(lines, t)
    configs = enumerate_configs(quantiles, region, t)

    predictions = []
    for idx, cfg in enumerate(configs):
        mean, var, warning = predict_individual(trend, gp, t, cfg)
        predictions.append((mean, _config_key(cfg), idx, var, warning))
    predictions.sort(key=lambda p: (p[0], p[1]))

    rank = max(math.ceil(q * len(predictions)), 1) - 1  # lower nearest rank
    mean, _, idx, var, warning = predictions[rank]
    half = Z_975 * math.sqrt(var)
    return ScenarioBound(
        t=t, q=q, config=configs[idx], mean_log_score=mean, variance=var,
        pi95=(mean - half, mean + half),
        warnings=(warning,) if warning else ())


def scenario_sweep(trend: TrendModel, gp: GpModel,
                   lines: list[QuantileLine], region: FeasibleRegion,
                   times, qs=DEFAULT_QS):
    """scenario_bound over the cross product of times and quantile levels.

    Returns ``(bounds, errors)``; a failing cell is reported as
    ``(t, q, message)`` and does not stop the remaining cells.
    """
    times = list(times)
    qs = list(qs)
    if not times or not qs:
        raise DataError("times and qs must be nonempty")
    bounds, errors = [], []
    for q in qs:
        for t in times:
            try:
                bounds.append(scenario_bound(trend, gp, lines, region, t, q))
            except DataError as exc:
                errors.append((t, q, str(exc)))
    return bounds, errors


_SWEEP_COLUMNS = ("t", "date", "q", "cores", "freq_mhz", "l3_kb", "threads",
                  "mean_log", "var", "lo95", "hi95")


def sweep_to_csv(bounds: list[ScenarioBound]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_SWEEP_COLUMNS)
    for b in bounds:
        writer.writerow([
            b.t, format_month(b.t), repr(b.q), b.config.cores,
            repr(b.config.freq_mhz), repr(b.config.l3_kb),
            repr(b.config.threads_per_core), repr(b.mean_log_score),
            repr(b.variance), repr(b.pi95[0]), repr(b.pi95[1]),
        ])
    return buf.getvalue()


def sweep_to_json(bounds: list[ScenarioBound]) -> str:
    return json.dumps([{
        "t": b.t, "date": format_month(b.t), "q": b.q,
        "cores": b.config.cores, "freq_mhz": b.config.freq_mhz,
        "l3_kb": b.config.l3_kb, "threads": b.config.threads_per_core,
        "mean_log": b.mean_log_score, "var": b.variance,
        "lo95": b.pi95[0], "hi95": b.pi95[1],
        "warnings": list(b.warnings),
    } for b in bounds], sort_keys=True)
