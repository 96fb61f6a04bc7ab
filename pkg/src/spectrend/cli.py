"""Command-line surface for the benchmark normalization and forecast pipeline.

Each subcommand reads CSV inputs and/or previously written model JSON,
writes its outputs under --out, and prints a one-line summary.  Exit codes:
0 success, 1 usage error, 2 data or model error.  Every delimited output
starts with a comment header recording the seed for reproducibility; pass
--plot to also render a PNG next to the delimited output.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import analysis, gp as gp_mod, hwforecast, normalize, scenario, trend as trend_mod
from .ingest import (
    SUITES,
    DataError,
    format_month,
    lineage_series,
    parse_month,
    parse_records,
    parse_records_lenient,
    summarize,
)
from .trend import FitError

DEFAULT_SEED = normalize.DEFAULT_SEED


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # Usage problems must exit 1, not argparse's default 2.
    def error(self, message):
        raise _UsageError(message)


def _header(seed: int) -> str:
    return f"# spectrend seed={seed}\n"


def _write(out_dir: Path, name: str, text: str, seed: int | None = None) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    if seed is not None and name.endswith(".csv"):
        text = _header(seed) + text
    path.write_text(text, encoding="utf-8")
    return path


def _load_records(args):
    with open(args.systems, encoding="utf-8") as systems:
        micros = open(args.micros, encoding="utf-8") if getattr(args, "micros", None) else None
        try:
            return parse_records(systems, micros)
        finally:
            if micros:
                micros.close()


def _normalized(args):
    records = _load_records(args)
    method = getattr(args, "method", "constant")
    target = getattr(args, "target", 2017)
    return normalize.chain_normalize(records, target_suite=target, method=method)


def _region(args, records=None):
    if getattr(args, "region", None):
        return hwforecast.FeasibleRegion.from_json(Path(args.region).read_text())
    if records:
        try:
            return hwforecast.region_from_records(records)
        except DataError:
            pass
    return hwforecast.DEFAULT_REGION


def _add_io_flags(p, systems=True, micros=True):
    if systems:
        p.add_argument("--systems", required=True, help="systems CSV path")
    if micros:
        p.add_argument("--micros", help="micros CSV path")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--plot", action="store_true",
                   help="also render a PNG figure next to the output")


def _cmd_ingest_check(args):
    with open(args.systems, encoding="utf-8") as systems:
        micros = open(args.micros, encoding="utf-8") if args.micros else None
        try:
            records, rejected = parse_records_lenient(systems, micros)
        finally:
            if micros:
                micros.close()
    lines = ["line,message"]
    for line, message in rejected:
        lines.append(f"{line},\"{message}\"")
    _write(Path(args.out), "ingest_report.csv", "\n".join(lines) + "\n", args.seed)
    print(f"ingest-check: {len(records)} records accepted, {len(rejected)} rows rejected")
    return 0


def _cmd_summarize(args):
    records = _load_records(args)
    s = summarize(records, args.suite, args.score)
    doc = {
        "suite": s.suite, "score": s.score_kind, "max": s.score_max,
        "mean": s.score_mean, "min": s.score_min, "n": s.count,
        "mean_cores": s.mean_cores, "mean_freq_mhz": s.mean_freq_mhz,
        "mean_l3_kb": s.mean_l3_kb, "mean_threads_per_core": s.mean_threads_per_core,
    }
    if args.format == "json":
        _write(Path(args.out), f"summary_{args.suite}.json",
               json.dumps({"seed": args.seed, **doc}, sort_keys=True) + "\n")
    else:
        header = ",".join(doc)
        row = ",".join("" if v is None else repr(v) if isinstance(v, float) else str(v)
                       for v in doc.values())
        _write(Path(args.out), f"summary_{args.suite}.csv",
               header + "\n" + row + "\n", args.seed)
    print(f"summarize: suite {s.suite} {s.score_kind}: max {s.score_max:.2f} "
          f"mean {s.score_mean:.2f} min {s.score_min:.2f} n={s.count}")
    return 0


def _cmd_normalize(args):
    records = _load_records(args)
    normalized = normalize.chain_normalize(records, target_suite=args.target,
                                           method=args.method)
    conversions = normalize.build_conversions(records, args.method)
    docs = []
    for (old, new), conv in sorted(conversions.items()):
        overlap = normalize.find_overlap(records, old, new)
        doc = json.loads(normalize.conversion_to_json(conv))
        if len(overlap) >= 4:
            # keep every held-out fold big enough for a defined R2
            k = max(2, min(5, len(overlap) // 2))
            doc["r2_cv"] = normalize.cross_validated_r2(
                overlap, args.method, k=k, seed=args.seed)
        docs.append(doc)
    _write(Path(args.out), "conversions.json",
           json.dumps({"seed": args.seed, "conversions": docs}, sort_keys=True) + "\n")

    rows = ["record_id,suite,date,score_speed,score_norm"]
    for r in normalized:
        if r.score_norm is None:
            continue
        rows.append(f"{r.record_id},{r.suite},{format_month(r.date)},"
                    f"{r.score_speed!r},{r.score_norm!r}")
    _write(Path(args.out), "normalized.csv", "\n".join(rows) + "\n", args.seed)
    if args.plot:
        from . import plotting
        plotting.plot_scores_over_time(normalized, Path(args.out) / "normalized.png")
    n = sum(1 for r in normalized if r.score_norm is not None)
    print(f"normalize: {n} records on suite-{args.target} scale "
          f"({args.method}, {len(docs)} adjacent conversions)")
    return 0


def _cmd_compose_check(args):
    records = _load_records(args)
    suite_def = SUITES[args.suite]
    rows = ["record_id,residual,flagged"]
    flagged = 0
    checked = 0
    for rec in records:
        if rec.suite != args.suite or rec.score_speed is None:
            continue
        if set(rec.micros) < set(suite_def.micro_names):
            continue
        residual, flag = analysis.verify_composition(rec, suite_def, args.tol)
        rows.append(f"{rec.record_id},{residual!r},{int(flag)}")
        checked += 1
        flagged += flag
    if not checked:
        raise DataError(f"no suite-{args.suite} records with full micro sets")
    _write(Path(args.out), "composition.csv", "\n".join(rows) + "\n", args.seed)
    print(f"compose-check: {checked} records, {flagged} outside tolerance {args.tol}")
    return 0


def _cmd_influence(args):
    records = _load_records(args)
    report = analysis.influence_stats(records, args.suite, SUITES[args.suite])
    _write(Path(args.out), f"influence_{args.suite}.json", report.to_json() + "\n")
    top = report.micros[0]
    note = " (all tied)" if report.tied else ""
    print(f"influence: suite {args.suite}, top micro by log-variance: "
          f"{top.name} ({top.log_variance:.4f}){note}")
    return 0


def _cmd_factor_reg(args):
    reg = analysis.fit_factor_regression(_normalized(args))
    out = Path(args.out)
    _write(out, "factor_regression.json", reg.to_json() + "\n")
    _write(out, "factor_regression.txt", reg.to_text() + "\n")
    coef = {r.name: r.coef for r in reg.rows}
    print("factor-reg: intercept {intercept:.4f} cores {cores:.4f} "
          "auto_parallel {auto_parallel:.4f}".format(**coef))
    return 0


def _cmd_lineage(args):
    normalized = _normalized(args)
    with open(args.lineage, encoding="utf-8") as stream:
        series, corr = lineage_series(stream, normalized)
    rows = ["genus,date,mean_log_score"]
    for s in series:
        for t, value in s.points:
            rows.append(f"{s.genus},{format_month(t)},{value!r}")
    _write(Path(args.out), "lineage_series.csv", "\n".join(rows) + "\n", args.seed)
    text = "undefined" if corr is None else f"{corr:.3f}"
    print(f"lineage: {len(series)} branches, lag-1 correlation {text}")
    return 0


def _cmd_fit_trend(args):
    normalized = [r for r in _normalized(args) if r.score_norm is not None]
    times = [r.date for r in normalized]
    logs = [math.log(r.score_norm) for r in normalized]
    model = trend_mod.fit_trend(times, logs)
    _write(Path(args.out), "trend.json", model.to_json() + "\n")
    if args.plot:
        from . import plotting
        plotting.plot_trend(model, normalized, Path(args.out) / "trend.png")
    print(f"fit-trend: alpha {model.alpha:.4f} beta {model.beta:.4f} "
          f"gamma {model.gamma:.4f} sigma2 {model.sigma2:.4f} n={len(times)}")
    return 0


def _load_trend(args) -> trend_mod.TrendModel:
    if getattr(args, "model", None):
        return trend_mod.TrendModel.from_json(Path(args.model).read_text())
    if args.alpha is None or args.beta is None or args.gamma is None:
        raise _UsageError("provide --model or all of --alpha/--beta/--gamma")
    import numpy as np
    return trend_mod.TrendModel(alpha=args.alpha, beta=args.beta,
                                gamma=args.gamma, sigma2=0.0,
                                cov_theta=np.zeros((3, 3)))


def _cmd_doubling(args):
    model = _load_trend(args)
    start = parse_month(args.start)
    steps = trend_mod.doubling_times(model, start, args.horizon)
    rows = ["date,month,gap_months"]
    for t, gap in steps:
        rows.append(f"{format_month(t)},{t},{gap}")
    _write(Path(args.out), "doubling.csv", "\n".join(rows) + "\n", args.seed)
    gaps = [gap for _, gap in steps[1:]]
    print(f"doubling: {len(gaps)} doublings from {args.start}, gaps {gaps}")
    return 0


def _cmd_fit_quantiles(args):
    records = _load_records(args)
    taus = tuple(float(v) for v in args.taus.split(","))
    lines = hwforecast.fit_factor_lines(records, taus=taus)
    _write(Path(args.out), "quantile_lines.json",
           hwforecast.lines_to_json(lines) + "\n")
    if args.plot:
        from . import plotting
        series = {}
        for name in hwforecast.FORECAST_FACTORS:
            pts = [(r.date, getattr(r.hw, name)) for r in records
                   if getattr(r.hw, name) is not None]
            if name == "cores":
                pts = [(t, math.log2(v)) for t, v in pts if v >= 1]
            series[name] = pts
        plotting.plot_quantile_lines(lines, series, Path(args.out) / "quantiles.png")
    print(f"fit-quantiles: {len(lines)} lines "
          f"({len(hwforecast.FORECAST_FACTORS)} factors x {len(taus)} taus)")
    return 0


def _cmd_feasible_check(args):
    from .ingest import HardwareConfig
    region = _region(args)
    t = parse_month(args.date)
    cfg = HardwareConfig(cores=args.cores, freq_mhz=args.freq, l3_kb=args.l3,
                         threads_per_core=args.threads)
    ok = hwforecast.is_feasible(cfg, region, t)
    _write(Path(args.out), "feasible.json", json.dumps({
        "date": args.date, "cores": args.cores, "freq_mhz": args.freq,
        "l3_kb": args.l3, "feasible": ok}, sort_keys=True) + "\n")
    print(f"feasible-check: {'feasible' if ok else 'infeasible'}")
    return 0


def _cmd_fit_gp(args):
    normalized = _normalized(args)
    model = trend_mod.TrendModel.from_json(Path(args.model).read_text())
    data = gp_mod.build_residuals(normalized, model, suite=args.suite)
    fitted = gp_mod.fit_gp(data)
    _write(Path(args.out), "gp.json", fitted.to_json() + "\n")
    print(f"fit-gp: n={len(data.y)} theta {fitted.theta:.4g} "
          f"tau2 {fitted.tau2:.4g} nugget {fitted.nugget:.4g} "
          f"(dropped {data.n_dropped})")
    return 0


def _cmd_gp_validate(args):
    normalized = _normalized(args)
    model = trend_mod.TrendModel.from_json(Path(args.model).read_text())
    rmse, pairs = gp_mod.holdout_validate(normalized, model,
                                          split_fraction=args.split,
                                          suite=args.suite)
    rows = ["predicted,observed"]
    rows += [f"{p!r},{o!r}" for p, o in pairs]
    _write(Path(args.out), "gp_holdout.csv", "\n".join(rows) + "\n", args.seed)
    if args.plot:
        from . import plotting
        plotting.plot_holdout(pairs, Path(args.out) / "gp_holdout.png")
    print(f"gp-validate: rmse {rmse:.4f} on {len(pairs)} held-out records")
    return 0


def _cmd_predict(args):
    from .ingest import HardwareConfig
    trend = trend_mod.TrendModel.from_json(Path(args.trend).read_text())
    model = gp_mod.GpModel.from_json(Path(args.gp).read_text())
    t = parse_month(args.date)
    cfg = HardwareConfig(cores=args.cores, freq_mhz=args.freq, l3_kb=args.l3,
                         threads_per_core=args.threads, auto_parallel=True)
    mean, var, warning = scenario.predict_individual(trend, model, t, cfg)
    half = trend_mod.Z_975 * math.sqrt(var)
    _write(Path(args.out), "prediction.json", json.dumps({
        "date": args.date, "mean_log": mean, "var": var,
        "lo95": mean - half, "hi95": mean + half,
        "warnings": [warning] if warning else []}, sort_keys=True) + "\n")
    print(f"predict: mean log {mean:.4f}, 95% PI [{mean - half:.4f}, {mean + half:.4f}]"
          + (f" ({warning})" if warning else ""))
    return 0


def _cmd_scenario(args):
    trend = trend_mod.TrendModel.from_json(Path(args.trend).read_text())
    model = gp_mod.GpModel.from_json(Path(args.gp).read_text())
    lines = hwforecast.lines_from_json(Path(args.lines).read_text())
    region = _region(args)
    times = [parse_month(d) for d in args.dates.split(",")]
    qs = [float(q) for q in args.qs.split(",")]
    bounds, errors = scenario.scenario_sweep(trend, model, lines, region, times, qs)
    out = Path(args.out)
    if args.format == "json":
        _write(out, "scenario.json", scenario.sweep_to_json(bounds) + "\n")
    else:
        _write(out, "scenario.csv", scenario.sweep_to_csv(bounds), args.seed)
    if args.plot and bounds:
        from . import plotting
        plotting.plot_scenarios(bounds, out / "scenario.png")
    for t, q, message in errors:
        print(f"scenario: cell (t={t}, q={q}) failed: {message}", file=sys.stderr)
    print(f"scenario: {len(bounds)} bounds over {len(times)} times x {len(qs)} quantiles"
          + (f", {len(errors)} cells failed" if errors else ""))
    return 0 if bounds else 2


def _cmd_sensitivity_export(args):
    records = _normalized(args) if args.normalized else _load_records(args)
    fields = tuple(args.fields.split(","))
    table = analysis.emit_sensitivity_table(records, fields)
    _write(Path(args.out), "sensitivity.csv", table, args.seed)
    if args.plot:
        from . import plotting
        plotting.plot_scores_over_time(records, Path(args.out) / "sensitivity.png",
                                       use_norm=args.normalized)
    n_rows = table.count("\n") - 1
    print(f"sensitivity-export: {n_rows} rows, fields {list(fields)}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="spectrend", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    p = sub.add_parser("ingest-check", help="validate input CSVs")
    _add_io_flags(p)
    p.set_defaults(func=_cmd_ingest_check)

    p = sub.add_parser("summarize", help="per-suite score and factor summary")
    _add_io_flags(p)
    p.add_argument("--suite", type=int, required=True, choices=sorted(SUITES))
    p.add_argument("--score", choices=("speed", "rate"), default="speed")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("normalize", help="chain scores onto a target suite scale")
    _add_io_flags(p)
    p.add_argument("--target", type=int, default=2017, choices=sorted(SUITES))
    p.add_argument("--method", choices=("constant", "regression"), default="constant")
    p.set_defaults(func=_cmd_normalize)

    p = sub.add_parser("compose-check", help="check the score composition identity")
    _add_io_flags(p)
    p.add_argument("--suite", type=int, required=True, choices=sorted(SUITES))
    p.add_argument("--tol", type=float, default=0.02)
    p.set_defaults(func=_cmd_compose_check)

    p = sub.add_parser("influence", help="rank micros by log-ratio variability")
    _add_io_flags(p)
    p.add_argument("--suite", type=int, required=True, choices=sorted(SUITES))
    p.set_defaults(func=_cmd_influence)

    p = sub.add_parser("factor-reg", help="log score vs cores and auto-parallel")
    _add_io_flags(p)
    p.add_argument("--target", type=int, default=2017, choices=sorted(SUITES))
    p.add_argument("--method", choices=("constant", "regression"), default="constant")
    p.set_defaults(func=_cmd_factor_reg)

    p = sub.add_parser("lineage", help="generation series and lag-1 correlation")
    _add_io_flags(p)
    p.add_argument("--lineage", required=True, help="lineage CSV path")
    p.add_argument("--target", type=int, default=2017, choices=sorted(SUITES))
    p.add_argument("--method", choices=("constant", "regression"), default="constant")
    p.set_defaults(func=_cmd_lineage)

    p = sub.add_parser("fit-trend", help="fit the power-law mean trend")
    _add_io_flags(p)
    p.add_argument("--target", type=int, default=2017, choices=sorted(SUITES))
    p.add_argument("--method", choices=("constant", "regression"), default="constant")
    p.set_defaults(func=_cmd_fit_trend)

    p = sub.add_parser("doubling", help="doubling times under a fitted trend")
    _add_io_flags(p, systems=False, micros=False)
    p.add_argument("--model", help="trend model JSON")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--start", required=True, help="start month, YYYY-MM")
    p.add_argument("--horizon", type=int, default=420, help="months past start")
    p.set_defaults(func=_cmd_doubling)

    p = sub.add_parser("fit-quantiles", help="quantile lines for hardware factors")
    _add_io_flags(p)
    p.add_argument("--taus", default="0.25,0.5,0.75,0.95")
    p.set_defaults(func=_cmd_fit_quantiles)

    p = sub.add_parser("feasible-check", help="test one configuration's feasibility")
    _add_io_flags(p, systems=False, micros=False)
    p.add_argument("--region", help="feasible-region JSON (default: built-in)")
    p.add_argument("--date", required=True, help="YYYY-MM")
    p.add_argument("--cores", type=int, required=True)
    p.add_argument("--freq", type=float, required=True, help="MHz")
    p.add_argument("--l3", type=float, required=True, help="kB")
    p.add_argument("--threads", type=float, default=2.0)
    p.set_defaults(func=_cmd_feasible_check)

    p = sub.add_parser("fit-gp", help="fit the residual Gaussian process")
    _add_io_flags(p)
    p.add_argument("--model", required=True, help="trend model JSON")
    p.add_argument("--suite", type=int, default=2017, choices=sorted(SUITES))
    p.add_argument("--target", type=int, default=2017, choices=sorted(SUITES))
    p.add_argument("--method", choices=("constant", "regression"), default="constant")
    p.set_defaults(func=_cmd_fit_gp)

    p = sub.add_parser("gp-validate", help="date-split holdout of the GP")
    _add_io_flags(p)
    p.add_argument("--model", required=True, help="trend model JSON")
    p.add_argument("--split", type=float, default=0.2)
    p.add_argument("--suite", type=int, default=2017, choices=sorted(SUITES))
    p.add_argument("--target", type=int, default=2017, choices=sorted(SUITES))
    p.add_argument("--method", choices=("constant", "regression"), default="constant")
    p.set_defaults(func=_cmd_gp_validate)

    p = sub.add_parser("predict", help="predict one configuration's score")
    _add_io_flags(p, systems=False, micros=False)
    p.add_argument("--trend", required=True, help="trend model JSON")
    p.add_argument("--gp", required=True, help="GP model JSON")
    p.add_argument("--date", required=True, help="YYYY-MM")
    p.add_argument("--cores", type=int, required=True)
    p.add_argument("--freq", type=float, required=True, help="MHz")
    p.add_argument("--l3", type=float, required=True, help="kB")
    p.add_argument("--threads", type=float, default=2.0)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("scenario", help="quantile scenario bounds over future months")
    _add_io_flags(p, systems=False, micros=False)
    p.add_argument("--trend", required=True, help="trend model JSON")
    p.add_argument("--gp", required=True, help="GP model JSON")
    p.add_argument("--lines", required=True, help="quantile lines JSON")
    p.add_argument("--region", help="feasible-region JSON (default: built-in)")
    p.add_argument("--dates", required=True, help="comma-separated YYYY-MM list")
    p.add_argument("--qs", default="0.25,0.5,0.75,0.95")
    p.set_defaults(func=_cmd_scenario)

    p = sub.add_parser("sensitivity-export", help="long-format plot data")
    _add_io_flags(p)
    p.add_argument("--fields", default=",".join(analysis.SENSITIVITY_FIELDS))
    p.add_argument("--normalized", action="store_true",
                   help="normalize scores before export")
    p.add_argument("--target", type=int, default=2017, choices=sorted(SUITES))
    p.add_argument("--method", choices=("constant", "regression"), default="constant")
    p.set_defaults(func=_cmd_sensitivity_export)

    return parser


def _apply_config(argv: list[str]) -> list[str]:
    """Expand --config run.json into flags not already on the command line.

    Keys in the JSON map to long flag names (underscores become dashes);
    explicit flags win over config values.
    """
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise _UsageError("--config needs a path")
    doc = json.loads(Path(argv[i + 1]).read_text())
    argv = argv[:i] + argv[i + 2:]
    if not isinstance(doc, dict):
        raise _UsageError("run config must be a JSON object")
    for key, value in doc.items():
        flag = "--" + str(key).replace("_", "-")
        if flag in argv:
            continue
        if isinstance(value, bool):
            if value:
                argv.append(flag)
        else:
            argv += [flag, str(value)]
    return argv


def run(argv=None) -> int:
    parser = build_parser()
    try:
        argv = list(sys.argv[1:] if argv is None else argv)
        argv = _apply_config(argv)
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (DataError, FitError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
