"""Augmented Dickey-Fuller unit-root test (constant, no trend)."""

from __future__ import annotations

import math

import numpy as np

from .ols import TestResult, ols_fit
from .special import norm_cdf

# MacKinnon (1994) response-surface coefficients, one integrated series,
# regression with constant.
_TAU_MAX = 2.74
_TAU_MIN = -18.83
_TAU_STAR = -1.61
_TAU_SMALLP = (2.1659, 1.4412, 3.8269e-2)
_TAU_LARGEP = (1.7339, 9.3202e-1, -1.2745e-1, -1.0368e-3)

MIN_EFFECTIVE_OBS = 50


def mackinnon_pvalue(tau: float) -> float:
    """Approximate p-value of the Dickey-Fuller tau statistic."""
    if tau > _TAU_MAX:
        return 1.0
    if tau < _TAU_MIN:
        return 0.0
    coef = _TAU_SMALLP if tau <= _TAU_STAR else _TAU_LARGEP
    z = sum(c * tau**i for i, c in enumerate(coef))
    return norm_cdf(z)


def default_maxlag(nobs: int) -> int:
    return int(math.floor(12.0 * (nobs / 100.0) ** 0.25))


def _design(x: np.ndarray, dx: np.ndarray, lag: int, start: int):
    # rows t = start..len(dx)-1 of dx; regressors 1, x_{t}, dx_{t-1..t-lag}
    # (dx[t] = x[t+1] - x[t], so x[t] is the lagged level)
    rows = np.arange(start, dx.shape[0])
    cols = [np.ones(rows.shape[0]), x[rows]]
    cols += [dx[rows - i] for i in range(1, lag + 1)]
    return np.column_stack(cols), dx[rows]


def adf_test(series, maxlag: int | None = None, autolag: str | None = "aic") -> TestResult:
    """Dickey-Fuller tau test of a unit root in ``series``.

    Fits ``dx_t = a + g*x_{t-1} + sum_i phi_i dx_{t-i} + e`` and reports the
    t-ratio of ``g``. With ``autolag="aic"`` the lag order minimizing AIC
    over ``0..maxlag`` (common estimation sample) is chosen and the model is
    then refit on all observations available at that order. With
    ``autolag=None`` exactly ``maxlag`` lags are used.

    Returns a ``TestResult`` whose ``extra`` holds ``usedlag`` and ``nobs``.
    The null hypothesis is a unit root; small p-values reject it.
    """
    x = np.asarray(series, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    n = x.shape[0]
    if maxlag is None:
        maxlag = default_maxlag(n)
    if maxlag < 0:
        raise ValueError("maxlag must be nonnegative")
    if n - maxlag - 1 < MIN_EFFECTIVE_OBS:
        raise ValueError(
            f"series too short for ADF: {n} observations, {maxlag} lags "
            f"(need >= {MIN_EFFECTIVE_OBS} after trimming)"
        )
    if np.ptp(x) == 0.0:
        raise ValueError("constant series: ADF undefined")

    dx = np.diff(x)
    if autolag is None:
        lag = maxlag
    elif autolag.lower() == "aic":
        best = None
        for lag_try in range(maxlag + 1):
            X, y = _design(x, dx, lag_try, maxlag)
            fit = ols_fit(X, y)
            m = y.shape[0]
            aic = m * math.log(fit.rss / m) + 2 * X.shape[1]
            if best is None or aic < best[0]:
                best = (aic, lag_try)
        lag = best[1]
    else:
        raise ValueError(f"unknown autolag {autolag!r}")

    X, y = _design(x, dx, lag, lag)
    fit = ols_fit(X, y)
    tau = float(fit.tvalues[1])
    return TestResult(
        statistic=tau,
        p_value=mackinnon_pvalue(tau),
        df=(),
        method="ADF",
        extra={"usedlag": lag, "nobs": int(y.shape[0])},
    )
