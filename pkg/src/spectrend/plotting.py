"""Optional figure rendering for CLI report outputs.

Every CLI report is a delimited table first; these helpers render a
companion PNG next to it when --plot is given.  Styling is deliberately
plain matplotlib defaults.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .ingest import format_month  # noqa: E402
from .trend import prediction_interval, trend_mean  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_scores_over_time(records, path, use_norm=True):
    """Scatter of (normalized) log scores over months, dot size = cores."""
    fig, ax = plt.subplots(figsize=(8, 5))
    xs, ys, sizes = [], [], []
    for r in records:
        score = r.score_norm if use_norm and r.score_norm is not None else r.score_speed
        if score is None:
            continue
        xs.append(r.date)
        ys.append(math.log(score))
        sizes.append(8 + 2 * (r.hw.cores or 1))
    ax.scatter(xs, ys, s=sizes, alpha=0.5, edgecolors="none")
    ax.set_xlabel(f"months since {format_month(0)}")
    ax.set_ylabel("log normalized speed score" if use_norm else "log speed score")
    return _save(fig, path)


def plot_trend(model, records, path, horizon_months=100):
    """Fitted mean trend with 95% prediction band over the data and beyond."""
    fig, ax = plt.subplots(figsize=(8, 5))
    t_max = max((r.date for r in records), default=300) + horizon_months
    ts = list(range(0, t_max + 1))
    ax.plot(ts, [trend_mean(model, t) for t in ts], "k-", label="mean trend")
    los, his = zip(*(prediction_interval(model, t) for t in ts))
    ax.plot(ts, los, "k--", linewidth=0.8, label="95% prediction bounds")
    ax.plot(ts, his, "k--", linewidth=0.8)
    for r in records:
        if r.score_norm is not None:
            ax.plot(r.date, math.log(r.score_norm), ".", color="tab:blue",
                    markersize=3, alpha=0.4)
    ax.set_xlabel(f"months since {format_month(0)}")
    ax.set_ylabel("log normalized speed score")
    ax.legend()
    return _save(fig, path)


def plot_quantile_lines(lines, series, path):
    """Hardware factor history with fitted quantile lines, one panel each."""
    factors = sorted({ln.factor for ln in lines})
    fig, axes = plt.subplots(1, len(factors), figsize=(5 * len(factors), 4))
    if len(factors) == 1:
        axes = [axes]
    for ax, name in zip(axes, factors):
        pts = series.get(name, [])
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], ".",
                    markersize=3, alpha=0.4)
        for ln in (l for l in lines if l.factor == name):
            t0, t1 = ln.window
            ax.plot([t0, t1],
                    [ln.intercept + ln.slope * t0, ln.intercept + ln.slope * t1],
                    label=f"tau={ln.tau}")
        ax.set_title(name + (" (log2)" if any(
            l.log2_scale for l in lines if l.factor == name) else ""))
        ax.set_xlabel("month")
        ax.legend(fontsize=7)
    return _save(fig, path)


def plot_holdout(pairs, path):
    """GP holdout: predicted vs observed log scores with the diagonal."""
    fig, ax = plt.subplots(figsize=(5, 5))
    preds = [p for p, _ in pairs]
    obs = [o for _, o in pairs]
    ax.plot(obs, preds, ".", alpha=0.5)
    lo = min(preds + obs)
    hi = max(preds + obs)
    ax.plot([lo, hi], [lo, hi], "r-", linewidth=1)
    ax.set_xlabel("observed log score")
    ax.set_ylabel("predicted log score")
    return _save(fig, path)


def plot_scenarios(bounds, path):
    """Scenario sweep: one panel per quantile level with its 95% band."""
    qs = sorted({b.q for b in bounds})
    fig, axes = plt.subplots(1, len(qs), figsize=(4.5 * len(qs), 4),
                             sharey=True)
    if len(qs) == 1:
        axes = [axes]
    for ax, q in zip(axes, qs):
        rows = sorted((b for b in bounds if b.q == q), key=lambda b: b.t)
        ts = [b.t for b in rows]
        ax.plot(ts, [b.mean_log_score for b in rows], "k:", label="mean")
        ax.fill_between(ts, [b.pi95[0] for b in rows], [b.pi95[1] for b in rows],
                        color="grey", alpha=0.4, label="95% bound")
        ax.set_title(f"q = {q}")
        ax.set_xlabel("month")
        ax.legend(fontsize=7)
    axes[0].set_ylabel("log score")
    return _save(fig, path)
