"""Gaussian-process model of trend residuals over hardware factors.

The trend model owns time; what is left per machine, the residual of the
log normalized score, is modeled as a zero-mean GP over standardized
(cores, freq, L3, threads-per-core) inputs with an isotropic Gaussian
kernel, a profiled-out scale, and an estimated nugget.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from .ingest import BenchmarkRecord, DataError, HardwareConfig
from .trend import TrendModel, trend_mean

__all__ = [
    "ResidualDataset",
    "GpModel",
    "build_residuals",
    "fit_gp",
    "gp_predict",
    "log_marginal_likelihood",
    "holdout_validate",
]

GP_FACTORS = ("cores", "freq_mhz", "l3_kb", "threads_per_core")

MIN_NUGGET = 1e-8

# Deterministic multistart grid over (log theta, log nugget).
_STARTS = ((0.0, -6.0), (-3.0, -2.0), (3.0, -10.0), (1.5, -4.0), (-1.5, -14.0))
_BOUNDS = ((-6.0, 6.0), (-18.0, 0.0))


@dataclass(frozen=True)
class ResidualDataset:
    X: np.ndarray       # n x d hardware factors, raw units
    y: np.ndarray       # n residuals of the log normalized score
    n_dropped: int      # rows excluded for missing factors


@dataclass(frozen=True)
class GpModel:
    x_mean: np.ndarray
    x_sd: np.ndarray
    theta: float        # squared-lengthscale of the Gaussian kernel
    tau2: float         # scale
    nugget: float
    X_std: np.ndarray   # standardized training inputs
    y: np.ndarray
    chol: np.ndarray    # Cholesky factor of C + nugget*I (lower)
    alpha: np.ndarray   # (C + nugget*I)^-1 y

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(X) - self.x_mean) / self.x_sd

    def to_json(self) -> str:
        return json.dumps({
            "standardization": {"mean": self.x_mean.tolist(),
                                "sd": self.x_sd.tolist()},
            "theta": self.theta, "tau2": self.tau2, "g": self.nugget,
            "X": self.X_std.ravel().tolist(),
            "n": int(self.X_std.shape[0]),
            "y": self.y.tolist(),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GpModel":
        doc = json.loads(text)
        n = doc["n"]
        X_std = np.array(doc["X"]).reshape(n, -1)
        return _assemble(
            np.array(doc["standardization"]["mean"]),
            np.array(doc["standardization"]["sd"]),
            X_std, np.array(doc["y"]), doc["theta"], doc["g"])


def _config_row(hw: HardwareConfig) -> list[float]:
    values = []
    for name in GP_FACTORS:
        v = getattr(hw, name)
        if v is None:
            raise DataError(f"hardware factor {name!r} is missing")
        values.append(float(v))
    return values


def build_residuals(records: list[BenchmarkRecord], trend: TrendModel,
                    suite: int = 2017) -> ResidualDataset:
    """Residual targets: log normalized score minus the trend mean.

    Rows with any missing factor are dropped; the count is reported on the
    dataset.
    """
    X_rows, y_rows, dropped = [], [], 0
    for rec in records:
        if rec.suite != suite or rec.score_norm is None:
            continue
        try:
            row = _config_row(rec.hw)
        except DataError:
            dropped += 1
            continue
        X_rows.append(row)
        y_rows.append(math.log(rec.score_norm) - trend_mean(trend, rec.date))
    d = len(GP_FACTORS)
    if len(X_rows) < d + 2:
        raise DataError(f"need at least {d + 2} complete rows, got {len(X_rows)}")
    return ResidualDataset(X=np.array(X_rows), y=np.array(y_rows),
                           n_dropped=dropped)


def _kernel(A: np.ndarray, B: np.ndarray, theta: float) -> np.ndarray:
    d2 = np.sum(A ** 2, axis=1)[:, None] + np.sum(B ** 2, axis=1)[None, :] \
        - 2.0 * A @ B.T
    return np.exp(-np.maximum(d2, 0.0) / theta)


def _assemble(x_mean, x_sd, X_std, y, theta, nugget) -> GpModel:
    n = len(y)
    C = _kernel(X_std, X_std, theta) + nugget * np.eye(n)
    chol = linalg.cholesky(C, lower=True)
    alpha = linalg.cho_solve((chol, True), y)
    tau2 = float(y @ alpha) / n
    return GpModel(x_mean=x_mean, x_sd=x_sd, theta=theta, tau2=tau2,
                   nugget=nugget, X_std=X_std, y=y, chol=chol, alpha=alpha)


def log_marginal_likelihood(X_std: np.ndarray, y: np.ndarray,
                            theta: float, nugget: float) -> float:
    """Concentrated log likelihood with the scale profiled out in closed form."""
    n = len(y)
    C = _kernel(X_std, X_std, theta) + nugget * np.eye(n)
    try:
        chol = linalg.cholesky(C, lower=True)
    except linalg.LinAlgError:
        return -np.inf
    alpha = linalg.cho_solve((chol, True), y)
    tau2 = float(y @ alpha) / n
    if tau2 <= 0:
        tau2 = np.finfo(float).tiny
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (n * math.log(tau2) + logdet + n)


def fit_gp(data: ResidualDataset, fixed: tuple[float, float] | None = None) -> GpModel:
    """Standardize inputs and estimate (theta, nugget) by likelihood search.

    ``fixed = (theta, nugget)`` skips the search, for hand-checkable
    fixtures.  The nugget is floored for conditioning even when targets are
    noiseless.
    """
    X, y = data.X, data.y
    x_mean = X.mean(axis=0)
    x_sd = X.std(axis=0)
    for j, s in enumerate(x_sd):
        if s == 0:
            raise DataError(f"constant column {GP_FACTORS[j]!r} cannot be standardized")
    X_std = (X - x_mean) / x_sd

    if fixed is not None:
        theta, nugget = fixed
        try:
            return _assemble(x_mean, x_sd, X_std, y, theta, max(nugget, 0.0))
        except linalg.LinAlgError:
            # Noiseless kernel matrix singular (repeated inputs); floor it.
            return _assemble(x_mean, x_sd, X_std, y, theta, MIN_NUGGET)

    def objective(params):
        return -log_marginal_likelihood(X_std, y, math.exp(params[0]),
                                        max(math.exp(params[1]), MIN_NUGGET))

    best = None
    for start in _STARTS:
        res = optimize.minimize(objective, np.array(start), method="L-BFGS-B",
                                bounds=_BOUNDS)
        if math.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise DataError("GP hyperparameter search failed from every start")
    theta = math.exp(best.x[0])
    nugget = max(math.exp(best.x[1]), MIN_NUGGET)
    return _assemble(x_mean, x_sd, X_std, y, theta, nugget)


def gp_predict(model: GpModel, x: HardwareConfig | np.ndarray):
    """Conditional mean and variance of the residual at one configuration.

    The nugget enters the training covariance only, so the model
    interpolates training targets as the nugget vanishes and reverts to
    the zero-mean prior far from all training points.
    """
    if isinstance(x, HardwareConfig):
        raw = np.array([_config_row(x)])
    else:
        raw = np.atleast_2d(np.asarray(x, dtype=float))
    z = model.standardize(raw)
    k = _kernel(z, model.X_std, model.theta)       # 1 x n
    mean = float((k @ model.alpha)[0])
    v = linalg.solve_triangular(model.chol, k.T, lower=True)
    var = model.tau2 * (1.0 + model.nugget - float((v.T @ v)[0, 0]))
    return mean, max(var, 0.0)


def holdout_validate(records: list[BenchmarkRecord], trend: TrendModel,
                     split_fraction: float = 0.2, suite: int = 2017):
    """Fit on the earliest fraction of records (by date), predict the rest.

    Returns ``(rmse, pairs)`` where rmse is on the log normalized score and
    pairs are (predicted, observed) log scores for plotting.
    """
    usable = [r for r in records
              if r.suite == suite and r.score_norm is not None]
    usable.sort(key=lambda r: (r.date, r.record_id))
    n_train = int(round(split_fraction * len(usable)))
    train, test = usable[:n_train], usable[n_train:]
    if not train or not test:
        raise DataError(
            f"empty {'training' if not train else 'test'} side of the date split")

    model = fit_gp(build_residuals(train, trend, suite))
    pairs = []
    errors = []
    for rec in test:
        try:
            row = np.array([_config_row(rec.hw)])
        except DataError:
            continue
        resid_mean, _ = gp_predict(model, row)
        predicted = trend_mean(trend, rec.date) + resid_mean
        observed = math.log(rec.score_norm)
        pairs.append((predicted, observed))
        errors.append(predicted - observed)
    if not errors:
        raise DataError("no test rows with complete hardware factors")
    rmse = float(np.sqrt(np.mean(np.square(errors))))
    return rmse, pairs


def extrapolation_warning(model: GpModel, hw: HardwareConfig,
                          z_limit: float = 3.0) -> str | None:
    """Message when a configuration lies outside the standardized support."""
    z = model.standardize(np.array([_config_row(hw)]))[0]
    outside = [f"{name} (z={value:.1f})"
               for name, value in zip(GP_FACTORS, z) if abs(value) > z_limit]
    if not outside:
        return None
    return "configuration outside training support: " + ", ".join(outside)
