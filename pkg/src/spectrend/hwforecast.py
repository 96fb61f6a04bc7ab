"""Hardware-factor trajectory forecasting and configuration feasibility.

Linear quantile regression (pinball loss, solved as an LP) forecasts where
core counts, frequency, and L3 cache are headed; a feasibility filter
rejects configurations outside empirically plausible regions: a minimum
cache-per-core ratio plus per-era convex polygons in the (frequency, cores)
and (frequency, L3) planes.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix, eye, hstack

from .ingest import BenchmarkRecord, DataError, HardwareConfig, parse_month

__all__ = [
    "QuantileLine",
    "Era",
    "FeasibleRegion",
    "DEFAULT_REGION",
    "DEFAULT_TAUS",
    "fit_quantile",
    "fit_factor_lines",
    "predict_factor_quantiles",
    "region_from_records",
    "is_feasible",
    "enumerate_configs",
]

DEFAULT_TAUS = (0.25, 0.5, 0.75, 0.95)
DEFAULT_WINDOW_START = parse_month("2000-01")

FORECAST_FACTORS = ("cores", "freq_mhz", "l3_kb")

# Floors applied to quantile-line predictions, per factor.
_FLOORS = {"cores": 1.0, "freq_mhz": 1.0, "l3_kb": 0.0}


@dataclass(frozen=True)
class QuantileLine:
    """A fitted linear quantile of one hardware factor over months.

    ``log2_scale`` marks factors fitted on the log2 scale (core counts);
    predictions are exponentiated back.
    """

    factor: str
    tau: float
    intercept: float
    slope: float
    window: tuple[int, int]
    log2_scale: bool = False

    def predict(self, t: float) -> float:
        value = self.intercept + self.slope * t
        if self.log2_scale:
            value = 2.0 ** value
        return max(value, _FLOORS.get(self.factor, 0.0))


def pinball_loss(values, fitted, tau: float) -> float:
    """Mean check loss; the quantity fit_quantile minimizes."""
    r = np.asarray(values, dtype=float) - np.asarray(fitted, dtype=float)
    return float(np.mean(np.where(r >= 0, tau * r, (tau - 1) * r)))


def fit_quantile(times, values, tau: float, factor: str = "",
                 log2_scale: bool = False) -> QuantileLine:
    """Fit intercept and slope minimizing the pinball loss, via an LP.

    Split the residual into positive and negative parts u - v; the check
    loss is then linear and the problem is a standard LP solved by HiGHS.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if not 0 < tau < 1:
        raise DataError(f"tau must be in (0, 1), got {tau}")
    n = len(t)
    if n < 20:
        raise DataError(f"n >= 20 required, got {n}")
    if np.ptp(t) == 0:
        raise DataError("degenerate fit: all times are equal")

    X = coo_matrix(np.column_stack([np.ones(n), t]))
    A_eq = hstack([X, eye(n), -eye(n)], format="csr")
    c = np.concatenate([np.zeros(2), np.full(n, tau), np.full(n, 1 - tau)])
    bounds = [(None, None), (None, None)] + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=A_eq, b_eq=y, bounds=bounds, method="highs")
    if not res.success:
        raise DataError(f"quantile LP failed: {res.message}")
    intercept, slope = float(res.x[0]), float(res.x[1])
    return QuantileLine(factor=factor, tau=tau, intercept=intercept, slope=slope,
                        window=(int(t.min()), int(t.max())), log2_scale=log2_scale)


def fit_factor_lines(records: list[BenchmarkRecord],
                     taus=DEFAULT_TAUS,
                     factors=FORECAST_FACTORS,
                     window_start: int = DEFAULT_WINDOW_START) -> list[QuantileLine]:
    """Fit quantile lines for each forecast factor from the record history.

    Core counts are fitted on the log2 scale.  Records before the window
    start (where the series has no usable trend yet) are excluded.
    """
    lines = []
    for name in factors:
        pts = [(r.date, getattr(r.hw, name)) for r in records
               if r.date >= window_start and getattr(r.hw, name) is not None]
        if name == "cores":
            pts = [(t, math.log2(v)) for t, v in pts if v >= 1]
        t = [p[0] for p in pts]
        v = [p[1] for p in pts]
        for tau in taus:
            lines.append(fit_quantile(t, v, tau, factor=name,
                                      log2_scale=(name == "cores")))
    return lines


def predict_factor_quantiles(lines: list[QuantileLine], t: float,
                             factors=FORECAST_FACTORS,
                             taus=DEFAULT_TAUS) -> dict[str, dict[float, float]]:
    """Evaluate the fitted lines at time t: factor -> tau -> value."""
    table: dict[str, dict[float, float]] = {}
    by_key = {(ln.factor, ln.tau): ln for ln in lines}
    for name in factors:
        table[name] = {}
        for tau in taus:
            line = by_key.get((name, tau))
            if line is None:
                raise DataError(f"no quantile line for factor {name!r} at tau {tau}")
            table[name][tau] = line.predict(t)
    return table


def lines_to_json(lines: list[QuantileLine]) -> str:
    return json.dumps([{
        "factor": ln.factor, "tau": ln.tau, "intercept": ln.intercept,
        "slope": ln.slope, "window": list(ln.window), "log2_scale": ln.log2_scale,
    } for ln in lines], sort_keys=True)


def lines_from_json(text: str) -> list[QuantileLine]:
    return [QuantileLine(factor=d["factor"], tau=d["tau"],
                         intercept=d["intercept"], slope=d["slope"],
                         window=tuple(d["window"]),
                         log2_scale=d.get("log2_scale", False))
            for d in json.loads(text)]


@dataclass(frozen=True)
class Era:
    start: int  # month index, inclusive
    end: int    # inclusive
    freq_cores_poly: tuple[tuple[float, float], ...]
    freq_l3_poly: tuple[tuple[float, float], ...]  # L3 in MB


@dataclass(frozen=True)
class FeasibleRegion:
    min_cache_per_core_mb: float = 0.5
    eras: tuple[Era, ...] = ()

    def era_for(self, t: int) -> Era:
        for era in self.eras:
            if era.start <= t <= era.end:
                return era
        raise DataError(f"no era defined for month {t}")

    def to_json(self) -> str:
        from .ingest import format_month
        return json.dumps({
            "min_cache_per_core_mb": self.min_cache_per_core_mb,
            "eras": [{
                "from": format_month(e.start),
                "to": format_month(e.end),
                "freq_cores_poly": [list(v) for v in e.freq_cores_poly],
                "freq_l3_poly": [list(v) for v in e.freq_l3_poly],
            } for e in self.eras],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FeasibleRegion":
        doc = json.loads(text)
        eras = tuple(
            Era(start=parse_month(e["from"]), end=parse_month(e["to"]),
                freq_cores_poly=tuple(tuple(v) for v in e["freq_cores_poly"]),
                freq_l3_poly=tuple(tuple(v) for v in e["freq_l3_poly"]))
            for e in doc["eras"])
        for era in eras:
            for poly in (era.freq_cores_poly, era.freq_l3_poly):
                if len(poly) < 3:
                    raise DataError("era polygon needs at least 3 vertices")
        return cls(min_cache_per_core_mb=doc["min_cache_per_core_mb"], eras=eras)


_ERA_RANGES = (
    (parse_month("2000-01"), parse_month("2015-12")),
    (parse_month("2016-01"), parse_month("2020-12")),
    (parse_month("2021-01"), parse_month("2025-12")),
)

# Broad fallback polygons used when no history is loaded to take hulls from.
DEFAULT_REGION = FeasibleRegion(
    min_cache_per_core_mb=0.5,
    eras=tuple(
        Era(start=a, end=b,
            freq_cores_poly=((100.0, 1.0), (9000.0, 1.0), (9000.0, 512.0), (100.0, 512.0)),
            freq_l3_poly=((100.0, 0.0), (9000.0, 0.0), (9000.0, 4096.0), (100.0, 4096.0)))
        for a, b in _ERA_RANGES),
)


def _convex_hull(points):
    """Andrew's monotone chain; returns hull vertices counter-clockwise."""
    pts = sorted(set(points))
    if len(pts) < 3:
        raise DataError("need at least 3 distinct points for a hull")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DataError("degenerate hull: points are collinear")
    return tuple(hull)


def _trimmed(values, lo=0.01, hi=0.99):
    arr = np.asarray(values, dtype=float)
    a, b = np.quantile(arr, [lo, hi])
    return arr[(arr >= a) & (arr <= b)]


def region_from_records(records: list[BenchmarkRecord],
                        min_cache_per_core_mb: float = 0.5,
                        era_ranges=_ERA_RANGES) -> FeasibleRegion:
    """Build era polygons as convex hulls of percentile-trimmed history.

    Each era's polygons cover the 1st-99th percentile box of that era's
    observed (freq, cores) and (freq, L3 MB) points.
    """
    eras = []
    for start, end in era_ranges:
        rows = [r for r in records
                if start <= r.date <= end and r.hw.freq_mhz is not None]
        fc = [(r.hw.freq_mhz, float(r.hw.cores)) for r in rows if r.hw.cores is not None]
        fl = [(r.hw.freq_mhz, r.hw.l3_kb / 1024.0) for r in rows if r.hw.l3_kb is not None]
        if len(fc) < 3 or len(fl) < 3:
            raise DataError(
                f"not enough records in era {start}..{end} to build polygons")

        def trimmed_hull(pairs):
            xs = _trimmed([p[0] for p in pairs])
            ys = _trimmed([p[1] for p in pairs])
            kept = [p for p in pairs
                    if xs.min() <= p[0] <= xs.max() and ys.min() <= p[1] <= ys.max()]
            return _convex_hull(kept)

        eras.append(Era(start=start, end=end,
                        freq_cores_poly=trimmed_hull(fc),
                        freq_l3_poly=trimmed_hull(fl)))
    return FeasibleRegion(min_cache_per_core_mb=min_cache_per_core_mb,
                          eras=tuple(eras))


def point_in_convex_polygon(point, polygon, tol: float = 1e-9) -> bool:
    """Boundary-inclusive membership test for a convex polygon."""
    if len(polygon) < 3:
        raise DataError("polygon needs at least 3 vertices")
    px, py = point
    signs = []
    for (x1, y1), (x2, y2) in zip(polygon, polygon[1:] + (polygon[0],)):
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        signs.append(cross)
    scale = max(abs(s) for s in signs) or 1.0
    pos = all(s >= -tol * scale for s in signs)
    neg = all(s <= tol * scale for s in signs)
    return pos or neg


def is_feasible(config: HardwareConfig, region: FeasibleRegion, t: int) -> bool:
    """Cache-per-core ratio plus both era polygons; boundaries count inside."""
    if config.cores is None or config.freq_mhz is None or config.l3_kb is None:
        raise DataError("feasibility needs cores, freq_mhz, and l3_kb")
    era = region.era_for(t)
    l3_mb = config.l3_kb / 1024.0
    if l3_mb / config.cores < region.min_cache_per_core_mb:
        return False
    if not point_in_convex_polygon((config.freq_mhz, float(config.cores)),
                                   era.freq_cores_poly):
        return False
    return point_in_convex_polygon((config.freq_mhz, l3_mb), era.freq_l3_poly)


def enumerate_configs(quantiles: dict[str, dict[float, float]],
                      region: FeasibleRegion, t: int,
                      threads_values=(1.0, 2.0)) -> list[HardwareConfig]:
    """All feasible combinations of the per-factor quantile predictions.

    The Cartesian product of predicted cores, frequency, and L3 values
    (cores rounded to whole counts) and the two threads-per-core values,
    filtered by :func:`is_feasible`, in lexicographic order.
    """
    for name in FORECAST_FACTORS:
        if name not in quantiles:
            raise DataError(f"quantile predictions missing factor {name!r}")
    cores_values = sorted({max(1, round(v)) for v in quantiles["cores"].values()})
    freq_values = sorted(set(quantiles["freq_mhz"].values()))
    l3_values = sorted(set(quantiles["l3_kb"].values()))

    configs = []
    for cores, freq, l3, threads in itertools.product(
            cores_values, freq_values, l3_values, sorted(threads_values)):
        cfg = HardwareConfig(cores=int(cores), freq_mhz=float(freq),
                             l3_kb=float(l3), threads_per_core=float(threads),
                             auto_parallel=True)
        if is_feasible(cfg, region, t):
            configs.append(cfg)
    if not configs:
        raise DataError(f"no feasible configurations at month {t}")
    return configs
