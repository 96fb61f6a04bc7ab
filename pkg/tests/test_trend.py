import math

import numpy as np
import pytest

from spectrend.ingest import DataError, parse_month
from spectrend.trend import (
    TrendModel,
    doubling_times,
    fit_trend,
    prediction_interval,
    trend_mean,
    trend_variance,
)

REF_THETA = (2.69, 0.25, -9.14)


def _model(alpha, beta, gamma, sigma2=0.0, cov=None):
    return TrendModel(alpha=alpha, beta=beta, gamma=gamma, sigma2=sigma2,
                      cov_theta=np.zeros((3, 3)) if cov is None else np.asarray(cov))


def _simulate(theta, sigma, n, seed=0, t_max=380):
    rng = np.random.default_rng(seed)
    t = rng.integers(0, t_max + 1, size=n).astype(float)
    alpha, beta, gamma = theta
    y = alpha * np.where(t > 0, t, 1.0) ** beta + gamma
    y[t == 0] = alpha * 0.0 + gamma
    return t, y + rng.normal(0.0, sigma, size=n)


def test_fit_recovers_zero_noise_parameters():
    t, y = _simulate(REF_THETA, 0.0, 200, seed=1)
    model = fit_trend(t, y)
    assert model.alpha == pytest.approx(2.69, abs=1e-6)
    assert model.beta == pytest.approx(0.25, abs=1e-6)
    assert model.gamma == pytest.approx(-9.14, abs=1e-6)
    assert model.sigma2 == pytest.approx(0.0, abs=1e-12)


def test_fit_beats_true_parameters_in_sample():
    t, y = _simulate(REF_THETA, 0.3, 500, seed=2)
    model = fit_trend(t, y)

    def sse(alpha, beta, gamma):
        mean = alpha * np.where(t > 0, t, 1.0) ** beta + gamma
        mean[t == 0] = gamma
        return float(np.sum((y - mean) ** 2))

    assert sse(model.alpha, model.beta, model.gamma) <= sse(*REF_THETA) + 1e-9


def test_fit_input_validation():
    with pytest.raises(DataError, match="n >= 10"):
        fit_trend([1, 2, 3], [0.1, 0.2, 0.3])
    with pytest.raises(DataError, match="3 distinct"):
        fit_trend([1.0, 2.0] * 6, [0.1] * 12)
    with pytest.raises(DataError, match=">= 0"):
        fit_trend([-1.0] + list(range(11)), [0.1] * 12)


def test_trend_mean_examples():
    model = _model(*REF_THETA)
    assert trend_mean(model, 0) == pytest.approx(-9.14, abs=1e-12)
    # 2.69 * 270**0.25 - 9.14, checked by hand
    assert trend_mean(model, 270) == pytest.approx(1.7641852492927654, abs=1e-12)
    flat = _model(0.0, 0.5, 3.0)
    for t in (0, 10, 400):
        assert trend_mean(flat, t) == 3.0


def test_trend_variance_identity_case():
    # theta=(1,1,0), cov=I, t=2: gradient (2, 2 ln 2, 1), var = 5 + 4 ln(2)^2
    model = _model(1.0, 1.0, 0.0, cov=np.eye(3))
    assert trend_variance(model, 2.0) == pytest.approx(
        5.0 + 4.0 * math.log(2.0) ** 2, abs=1e-12)
    assert trend_variance(_model(*REF_THETA), 100.0) == 0.0


def test_trend_variance_at_t0_uses_gamma_only():
    cov = np.diag([4.0, 9.0, 0.25])
    model = _model(*REF_THETA, cov=cov)
    assert trend_variance(model, 0.0) == pytest.approx(0.25, abs=1e-14)


def test_trend_variance_nonnegative_for_psd_cov():
    rng = np.random.default_rng(12)
    for _ in range(200):
        A = rng.normal(size=(3, 3))
        model = _model(*REF_THETA, cov=A @ A.T)
        assert trend_variance(model, float(rng.uniform(0, 400))) >= -1e-12


def test_prediction_interval_width():
    model = _model(*REF_THETA, sigma2=0.25)
    lo, hi = prediction_interval(model, 100.0)
    mean = trend_mean(model, 100.0)
    half = 1.959964 * 0.5
    assert lo == pytest.approx(mean - half, abs=1e-6)
    assert hi == pytest.approx(mean + half, abs=1e-6)
    # interval collapses when all uncertainty vanishes
    lo0, hi0 = prediction_interval(_model(*REF_THETA), 100.0)
    assert lo0 == hi0

    lo90, hi90 = prediction_interval(model, 100.0, level=0.90)
    assert hi90 - lo90 < hi - lo
    with pytest.raises(DataError):
        prediction_interval(model, 100.0, level=1.5)


def test_fit_covariance_matches_gauss_newton_formula():
    t, y = _simulate(REF_THETA, 0.2, 300, seed=5)
    model = fit_trend(t, y)
    tb = np.where(t > 0, t, 1.0) ** model.beta
    tb[t == 0] = 0.0
    col_beta = np.where(t > 0, model.alpha * tb * np.log(np.where(t > 0, t, 1.0)), 0.0)
    J = np.column_stack([tb, col_beta, np.ones_like(tb)])
    expected = model.sigma2 * np.linalg.inv(J.T @ J)
    assert np.allclose(model.cov_theta, expected, atol=1e-8)


def test_doubling_first_step_hand_check():
    model = _model(*REF_THETA)
    start = parse_month("1996-04")
    steps = doubling_times(model, start, horizon=24)
    # t1 = (8**0.25 + ln2/2.69)**4 = 14.15 -> month 14, six months after start
    assert steps[0] == (8, 0)
    assert steps[1] == (14, 6)


def test_doubling_constant_gaps_when_beta_is_one():
    model = _model(0.1, 1.0, 0.0)
    steps = doubling_times(model, 0, horizon=300)
    gaps = [g for _, g in steps[1:]]
    expected = math.log(2) / 0.1
    # individual gaps only wobble by month rounding
    assert all(abs(g - expected) <= 1.0 for g in gaps)
    assert sum(gaps) == steps[-1][0]


def test_doubling_gaps_grow_when_beta_below_one():
    steps = doubling_times(_model(*REF_THETA), 8, horizon=420)
    gaps = [g for _, g in steps[1:]]
    assert len(gaps) >= 10
    assert all(b >= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] > gaps[0]


def test_doubling_respects_horizon():
    steps = doubling_times(_model(*REF_THETA), 8, horizon=100)
    assert all(t <= 108 for t, _ in steps)


def test_doubling_requires_positive_alpha_beta():
    with pytest.raises(DataError, match="alpha and beta"):
        doubling_times(_model(-1.0, 0.5, 0.0), 0, 100)
    with pytest.raises(DataError, match="alpha and beta"):
        doubling_times(_model(1.0, -0.5, 0.0), 0, 100)


def test_model_json_round_trip():
    model = TrendModel(alpha=2.69, beta=0.25, gamma=-9.14, sigma2=0.09,
                       cov_theta=np.arange(9.0).reshape(3, 3) / 100.0)
    back = TrendModel.from_json(model.to_json())
    assert (back.alpha, back.beta, back.gamma, back.sigma2) == \
        (model.alpha, model.beta, model.gamma, model.sigma2)
    assert np.array_equal(back.cov_theta, model.cov_theta)
