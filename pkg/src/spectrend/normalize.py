"""Cross-generation score normalization.

Two conversion methods map scores from an older suite onto a newer suite's
scale: a constant factor (geometric mean of score ratios over the machines
benchmarked under both suites) and a linear regression of the log score
ratio on the log old score plus system factors.  Conversions for adjacent
suite pairs are chained to reach a common target scale.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .ingest import (
    SUITE_ORDER,
    BenchmarkRecord,
    DataError,
    HardwareConfig,
)

__all__ = [
    "OverlapSet",
    "ConversionFactor",
    "RegressionConversion",
    "find_overlap",
    "constant_factor",
    "fit_regression_conversion",
    "cross_validated_r2",
    "build_conversions",
    "chain_normalize",
    "conversion_to_json",
    "conversion_from_json",
]

DEFAULT_SEED = 20170801
DEFAULT_FACTORS = ("cores", "freq_mhz")


@dataclass(frozen=True)
class OverlapPair:
    system_id: str
    score_old: float
    score_new: float
    hw: HardwareConfig


@dataclass(frozen=True)
class OverlapSet:
    suite_old: int
    suite_new: int
    pairs: tuple[OverlapPair, ...]

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class ConversionFactor:
    """Constant conversion: multiply an old-suite score by ``factor``."""

    suite_old: int
    suite_new: int
    factor: float
    n_pairs: int

    def predict_new(self, score_old: float, hw: HardwareConfig | None = None) -> float:
        return score_old * self.factor


@dataclass(frozen=True)
class RegressionConversion:
    """Regression conversion: the log score ratio is modeled as a linear
    function of the log old score and the listed system factors."""

    suite_old: int
    suite_new: int
    beta0: float
    beta1: float
    beta_factors: tuple[float, ...]
    factors: tuple[str, ...]
    residual_variance: float
    n_pairs: int

    def predict_log_ratio(self, score_old: float, hw: HardwareConfig | None) -> float:
        total = self.beta0 + self.beta1 * math.log(score_old)
        for name, beta in zip(self.factors, self.beta_factors):
            value = getattr(hw, name, None) if hw is not None else None
            if value is None:
                raise DataError(f"regression conversion needs factor {name!r}")
            total += beta * float(value)
        return total

    def predict_new(self, score_old: float, hw: HardwareConfig | None = None) -> float:
        return score_old * math.exp(self.predict_log_ratio(score_old, hw))


def find_overlap(records: list[BenchmarkRecord], suite_old: int, suite_new: int,
                 score_kind: str = "speed") -> OverlapSet:
    """Inner-join the two suites on system_id, keeping rows scored in both.

    A system_id submitted more than once within one suite contributes its
    earliest-dated row; later duplicates are dropped with a warning.
    """
    attr = "score_speed" if score_kind == "speed" else "score_rate"

    def best_rows(suite: int) -> dict[str, BenchmarkRecord]:
        best: dict[str, BenchmarkRecord] = {}
        dropped = 0
        for rec in records:
            if rec.suite != suite or getattr(rec, attr) is None:
                continue
            prev = best.get(rec.system_id)
            if prev is None or rec.date < prev.date:
                if prev is not None:
                    dropped += 1
                best[rec.system_id] = rec
            else:
                dropped += 1
        if dropped:
            warnings.warn(
                f"suite {suite}: dropped {dropped} duplicate system_id rows "
                "(earliest date kept)", stacklevel=3)
        return best

    old_rows = best_rows(suite_old)
    new_rows = best_rows(suite_new)
    pairs = tuple(
        OverlapPair(system_id=sid,
                    score_old=getattr(old_rows[sid], attr),
                    score_new=getattr(new_rows[sid], attr),
                    hw=old_rows[sid].hw)
        for sid in sorted(set(old_rows) & set(new_rows))
    )
    if not pairs:
        raise DataError(f"no overlap between suites {suite_old} and {suite_new}")
    return OverlapSet(suite_old=suite_old, suite_new=suite_new, pairs=pairs)


def constant_factor(overlap: OverlapSet) -> ConversionFactor:
    """Geometric mean of new/old score ratios over the overlap set."""
    if not overlap.pairs:
        raise DataError("empty overlap set")
    mean_log = math.fsum(
        math.log(p.score_new / p.score_old) for p in overlap.pairs
    ) / len(overlap.pairs)
    return ConversionFactor(suite_old=overlap.suite_old, suite_new=overlap.suite_new,
                            factor=math.exp(mean_log), n_pairs=len(overlap.pairs))


def _design_matrix(pairs, factors):
    cols = [np.ones(len(pairs)), np.array([math.log(p.score_old) for p in pairs])]
    names = ["intercept", "log_score_old"]
    for name in factors:
        values = []
        for p in pairs:
            v = getattr(p.hw, name, None)
            if v is None:
                raise DataError(f"factor {name!r} missing on system {p.system_id!r}")
            values.append(float(v))
        cols.append(np.array(values))
        names.append(name)
    return np.column_stack(cols), names


def fit_regression_conversion(overlap: OverlapSet,
                              factors: tuple[str, ...] = DEFAULT_FACTORS) -> RegressionConversion:
    """OLS fit of the log score ratio on log old score and system factors."""
    factors = tuple(factors)
    n_coef = 2 + len(factors)
    if len(overlap.pairs) <= n_coef + 1:
        raise DataError(
            f"overlap has {len(overlap.pairs)} pairs; need more than {n_coef + 1} "
            f"for {n_coef} coefficients")
    X, names = _design_matrix(overlap.pairs, factors)
    for j in range(1, X.shape[1]):
        if np.ptp(X[:, j]) == 0:
            raise DataError(f"rank-deficient design: column {names[j]!r} is constant")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DataError("rank-deficient design: collinear columns "
                        + repr(names[1:]))
    y = np.array([math.log(p.score_new / p.score_old) for p in overlap.pairs])
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    dof = max(len(y) - n_coef, 1)
    return RegressionConversion(
        suite_old=overlap.suite_old,
        suite_new=overlap.suite_new,
        beta0=float(beta[0]),
        beta1=float(beta[1]),
        beta_factors=tuple(float(b) for b in beta[2:]),
        factors=factors,
        residual_variance=float(resid @ resid / dof),
        n_pairs=len(overlap.pairs),
    )


def cross_validated_r2(overlap: OverlapSet, method: str, k: int = 5,
                       seed: int = DEFAULT_SEED,
                       factors: tuple[str, ...] = DEFAULT_FACTORS) -> float:
    """Mean held-out R2 of predicted vs. true new scores over k folds.

    Fold assignment is a seeded permutation, so the result is invariant to
    record order.
    """
    n = len(overlap.pairs)
    if not 2 <= k <= n:
        raise DataError(f"need overlap size >= k >= 2, got n={n}, k={k}")
    if method not in ("constant", "regression"):
        raise DataError(f"unknown method {method!r}")

    ordered = sorted(overlap.pairs, key=lambda p: p.system_id)
    perm = np.random.default_rng(seed).permutation(n)
    folds = [perm[i::k] for i in range(k)]

    r2s = []
    for fold in folds:
        held = set(int(i) for i in fold)
        train = [ordered[i] for i in range(n) if i not in held]
        test = [ordered[i] for i in sorted(held)]
        sub = OverlapSet(overlap.suite_old, overlap.suite_new, tuple(train))
        if method == "constant":
            conv = constant_factor(sub)
        else:
            conv = fit_regression_conversion(sub, factors)
        truth = np.array([p.score_new for p in test])
        pred = np.array([conv.predict_new(p.score_old, p.hw) for p in test])
        ss_res = float(np.sum((truth - pred) ** 2))
        ss_tot = float(np.sum((truth - truth.mean()) ** 2))
        if ss_res == 0:
            r2s.append(1.0)
        elif ss_tot == 0:
            continue  # R2 undefined on a constant held-out fold
        else:
            r2s.append(1.0 - ss_res / ss_tot)
    if not r2s:
        raise DataError("R2 undefined: every fold had constant held-out scores")
    return float(np.mean(r2s))


def _adjacent_path(suite_from: int, suite_to: int) -> list[tuple[int, int]]:
    i, j = SUITE_ORDER.index(suite_from), SUITE_ORDER.index(suite_to)
    if i <= j:
        return [(SUITE_ORDER[k], SUITE_ORDER[k + 1]) for k in range(i, j)]
    return [(SUITE_ORDER[k], SUITE_ORDER[k - 1]) for k in range(i, j, -1)]


def build_conversions(records: list[BenchmarkRecord], method: str = "constant",
                      factors: tuple[str, ...] = DEFAULT_FACTORS,
                      score_kind: str = "speed"):
    """Fit a conversion for every adjacent suite pair present in the data.

    Returns a dict keyed by (suite_old, suite_new).  Pairs without overlap
    are skipped; chain_normalize reports the gap if it needs one.
    """
    conversions = {}
    present = {r.suite for r in records}
    for old, new in zip(SUITE_ORDER, SUITE_ORDER[1:]):
        if old not in present or new not in present:
            continue
        try:
            overlap = find_overlap(records, old, new, score_kind)
        except DataError:
            continue
        if method == "constant":
            conversions[(old, new)] = constant_factor(overlap)
        elif method == "regression":
            conversions[(old, new)] = fit_regression_conversion(overlap, factors)
        else:
            raise DataError(f"unknown method {method!r}")
    return conversions


def _micro_factor(records, micro: str, old: int, new: int) -> float | None:
    """Constant conversion factor for one micro across an adjacent pair."""
    def rows(suite):
        best = {}
        for r in records:
            if r.suite == suite and micro in r.micros:
                prev = best.get(r.system_id)
                if prev is None or r.date < prev.date:
                    best[r.system_id] = r
        return best

    old_rows, new_rows = rows(old), rows(new)
    shared = sorted(set(old_rows) & set(new_rows))
    if not shared:
        return None
    mean_log = math.fsum(
        math.log(new_rows[s].micros[micro] / old_rows[s].micros[micro]) for s in shared
    ) / len(shared)
    return math.exp(mean_log)


def chain_normalize(records: list[BenchmarkRecord], target_suite: int = 2017,
                    method: str = "constant", conversions=None,
                    factors: tuple[str, ...] = DEFAULT_FACTORS,
                    micro_names: tuple[str, ...] = ("gcc", "perl")) -> list[BenchmarkRecord]:
    """Chain per-pair conversions to put every record on the target scale.

    Records already in the target suite keep their score unchanged.  Micros
    listed in ``micro_names`` (those present in every suite generation) are
    chained the same way with their own constant factors.
    """
    if target_suite not in SUITE_ORDER:
        raise DataError(f"unknown target suite {target_suite}")
    if conversions is None:
        conversions = build_conversions(records, method, factors)

    micro_chain: dict[tuple[int, int], dict[str, float]] = {}
    for old, new in zip(SUITE_ORDER, SUITE_ORDER[1:]):
        micro_chain[(old, new)] = {}
        for micro in micro_names:
            f = _micro_factor(records, micro, old, new)
            if f is not None:
                micro_chain[(old, new)][micro] = f

    def step_conversion(old, new):
        if (old, new) in conversions:
            return conversions[(old, new)]
        if (new, old) in conversions:
            conv = conversions[(new, old)]
            if isinstance(conv, ConversionFactor):
                return ConversionFactor(old, new, 1.0 / conv.factor, conv.n_pairs)
            raise DataError(
                f"regression conversion {new}->{old} cannot be inverted for {old}->{new}")
        raise DataError(f"missing conversion for adjacent pair {old}->{new}")

    out = []
    for rec in records:
        if rec.score_speed is None:
            out.append(rec)
            continue
        score = rec.score_speed
        micros = {m: rec.micros[m] for m in micro_names if m in rec.micros}
        for old, new in _adjacent_path(rec.suite, target_suite):
            score = step_conversion(old, new).predict_new(score, rec.hw)
            for m in list(micros):
                table = micro_chain.get((old, new)) or {}
                inv_table = micro_chain.get((new, old)) or {}
                if m in table:
                    micros[m] *= table[m]
                elif m in inv_table:
                    micros[m] /= inv_table[m]
                else:
                    del micros[m]  # no factor chain for this micro
        out.append(rec.with_norm(score, micros))
    return out


def conversion_to_json(conv) -> str:
    """Serialize a conversion (either method) to its JSON wire form."""
    if isinstance(conv, ConversionFactor):
        doc = {"old": conv.suite_old, "new": conv.suite_new, "method": "constant",
               "factor": conv.factor, "n_pairs": conv.n_pairs}
    elif isinstance(conv, RegressionConversion):
        doc = {"old": conv.suite_old, "new": conv.suite_new, "method": "regression",
               "coefficients": {"beta0": conv.beta0, "beta1": conv.beta1,
                                "factors": dict(zip(conv.factors, conv.beta_factors))},
               "residual_variance": conv.residual_variance, "n_pairs": conv.n_pairs}
    else:
        raise TypeError(f"not a conversion: {conv!r}")
    return json.dumps(doc, sort_keys=True)


def conversion_from_json(text: str):
    doc = json.loads(text)
    if doc["method"] == "constant":
        return ConversionFactor(doc["old"], doc["new"], doc["factor"],
                                doc.get("n_pairs", 0))
    if doc["method"] == "regression":
        coef = doc["coefficients"]
        names = tuple(coef["factors"])
        return RegressionConversion(
            doc["old"], doc["new"], coef["beta0"], coef["beta1"],
            tuple(coef["factors"][f] for f in names), names,
            doc.get("residual_variance", 0.0), doc.get("n_pairs", 0))
    raise DataError(f"unknown conversion method {doc['method']!r}")
