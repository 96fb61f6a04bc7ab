"""Power-law mean trend of the log score over months.

The model is ``log(y_t) = alpha * t**beta + gamma + noise`` with normal
noise; with an exponent below 1 the time needed to double the raw score
grows as the trend matures.  Fitting is maximum likelihood (equivalently
least squares), with parameter covariance from the Gauss-Newton
approximation of the Fisher information, delta-method prediction variance,
and closed-form doubling times.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .ingest import DataError

__all__ = [
    "TrendModel",
    "FitError",
    "fit_trend",
    "trend_mean",
    "trend_variance",
    "prediction_interval",
    "doubling_times",
]

Z_975 = 1.959964

_MAX_ITER = 500
_REL_TOL = 1e-10


class FitError(RuntimeError):
    """Optimizer failed to converge; carries the last iterate."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


@dataclass(frozen=True)
class TrendModel:
    alpha: float
    beta: float
    gamma: float
    sigma2: float
    cov_theta: np.ndarray  # 3x3, Var of (alpha, beta, gamma)
    t_origin: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
            "sigma2": self.sigma2,
            "cov": [float(v) for v in np.asarray(self.cov_theta).ravel()],
            "t_origin": self.t_origin,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrendModel":
        doc = json.loads(text)
        return cls(alpha=doc["alpha"], beta=doc["beta"], gamma=doc["gamma"],
                   sigma2=doc["sigma2"],
                   cov_theta=np.array(doc["cov"]).reshape(3, 3),
                   t_origin=doc.get("t_origin", 0))


def _power(t: np.ndarray, beta: float) -> np.ndarray:
    # 0**beta defined as 0 for beta > 0 (month-0 rows contribute gamma only).
    out = np.zeros_like(t, dtype=float)
    pos = t > 0
    out[pos] = np.power(t[pos], beta)
    return out


def _mean(t, theta):
    alpha, beta, gamma = theta
    return alpha * _power(t, beta) + gamma


def _jacobian(t, theta):
    """d mean / d (alpha, beta, gamma); the ln(t) column is 0 at t = 0."""
    alpha, beta, _ = theta
    tb = _power(t, beta)
    col_beta = np.zeros_like(tb)
    pos = t > 0
    col_beta[pos] = alpha * tb[pos] * np.log(t[pos])
    return np.column_stack([tb, col_beta, np.ones_like(tb)])


def fit_trend(times, log_scores) -> TrendModel:
    """Fit (alpha, beta, gamma) by damped Gauss-Newton least squares.

    Starting point: gamma0 slightly below the smallest log score, beta0 on
    a coarse grid, alpha0 by linear regression of the shifted scores on
    t**beta0; the grid start with the lowest residual sum wins.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(log_scores, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise DataError("times and log_scores must be 1-D and the same length")
    if len(t) < 10:
        raise DataError(f"n >= 10 required, got {len(t)}")
    if np.any(t < 0):
        raise DataError("times must be >= 0")
    if len(np.unique(t)) < 3:
        raise DataError("need at least 3 distinct times")

    def sse(theta):
        r = y - _mean(t, theta)
        return float(r @ r)

    gamma0 = float(y.min()) - 0.1
    best = None
    for beta0 in np.arange(0.1, 0.95, 0.1):
        tb = _power(t, beta0)
        denom = float(tb @ tb)
        alpha0 = float(tb @ (y - gamma0)) / denom if denom > 0 else 1.0
        theta = np.array([alpha0, beta0, gamma0])
        value = sse(theta)
        if best is None or value < best[0]:
            best = (value, theta)
    theta = best[1]

    # Levenberg-Marquardt damping on the Gauss-Newton step.
    lam = 1e-3
    value = sse(theta)
    converged = False
    for _ in range(_MAX_ITER):
        J = _jacobian(t, theta)
        r = y - _mean(t, theta)
        A = J.T @ J
        g = J.T @ r
        stepped = False
        for _ in range(50):
            try:
                step = np.linalg.solve(A + lam * np.diag(np.diag(A)) + 1e-12 * np.eye(3), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            candidate = theta + step
            cand_value = sse(candidate)
            if cand_value <= value:
                theta, new_value = candidate, cand_value
                lam = max(lam / 10, 1e-12)
                stepped = True
                break
            lam *= 10
        if not stepped:
            converged = True  # no descent direction left; treat as stationary
            break
        if value - new_value <= _REL_TOL * max(value, 1e-30):
            value = new_value
            converged = True
            break
        value = new_value
    if not converged:
        raise FitError(f"trend fit did not converge in {_MAX_ITER} iterations; "
                       f"last theta = {theta.tolist()}", theta=theta)

    n = len(t)
    sigma2 = sse(theta) / n  # MLE
    J = _jacobian(t, theta)
    cov = sigma2 * np.linalg.inv(J.T @ J + 1e-12 * np.eye(3))
    cov = (cov + cov.T) / 2
    return TrendModel(alpha=float(theta[0]), beta=float(theta[1]),
                      gamma=float(theta[2]), sigma2=float(sigma2),
                      cov_theta=cov, t_origin=0)


def trend_mean(model: TrendModel, t: float) -> float:
    if t < 0:
        raise DataError("t must be >= 0")
    return float(_mean(np.array([float(t)]), (model.alpha, model.beta, model.gamma))[0])


def trend_variance(model: TrendModel, t: float) -> float:
    """Delta-method variance of the trend mean at time t."""
    if t < 0:
        raise DataError("t must be >= 0")
    grad = _jacobian(np.array([float(t)]),
                     (model.alpha, model.beta, model.gamma))[0]
    return float(grad @ np.asarray(model.cov_theta) @ grad)


def prediction_interval(model: TrendModel, t: float, level: float = 0.95):
    """Prediction interval for a single log score at time t."""
    if not 0 < level < 1:
        raise DataError(f"level must be in (0, 1), got {level}")
    from scipy.stats import norm
    z = float(norm.ppf(0.5 + level / 2))
    mean = trend_mean(model, t)
    half = z * math.sqrt(trend_variance(model, t) + model.sigma2)
    return mean - half, mean + half


def doubling_times(model: TrendModel, t_start: int, horizon: int):
    """Successive months at which the trend's raw score doubles.

    Returns ``[(month_index, gap_months), ...]`` starting with
    ``(t_start, 0)``; each raw-score doubling adds ln(2) on the log scale,
    so ``t_k = (t_start**beta + k*ln2/alpha)**(1/beta)``, rounded to the
    nearest month, until the horizon is passed.
    """
    if model.alpha <= 0 or model.beta <= 0:
        raise DataError("no doubling under fitted trend (alpha and beta must be > 0)")
    base = t_start ** model.beta
    step = math.log(2) / model.alpha
    out = [(int(t_start), 0)]
    k = 1
    prev = int(t_start)
    while True:
        t_k = round((base + k * step) ** (1 / model.beta))
        if t_k > t_start + horizon:
            break
        out.append((t_k, t_k - prev))
        prev = t_k
        k += 1
    return out
