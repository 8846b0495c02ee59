"""Monotonic trend test for a single evenly spaced series.

Implements the test of Brillinger (1989, Biometrika 76, 23-30): a linear
contrast of the series with the coefficients of Abelson and Tukey (1963),
studentised by a standard-error estimate that is robust to stationary
autocorrelation of the noise.  The statistic is approximately standard
normal when the underlying signal is constant in time; large positive
(negative) values indicate an increasing (decreasing) monotone signal.

Standard-error estimate: the series is detrended by an ordinary
least-squares line, residual autocovariances up to ``max_lag`` are
combined through a Bartlett lag window, and the implied variance of the
contrast is rescaled by an exact finite-sample factor that makes the
estimator unbiased under iid noise (the lag window plus OLS detrending
otherwise biases it low at short series lengths).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from . import kernels

DEFAULT_MAX_LAG = 5
DEFAULT_VARIANCE_FLOOR = 1e-12

_TINY = np.finfo(np.float64).tiny


class DegenerateSeriesError(ValueError):
    """Raised when the variance estimate collapses (e.g. an exact line)."""


@dataclass(frozen=True)
class TrendResult:
    """Outcome of the trend test on one series.

    ``statistic`` is the studentised contrast, ``p_value`` the two-sided
    normal-approximation p-value, ``contrast`` the raw linear combination,
    ``std_error`` its estimated standard error (0.0 only for the constant
    series convention), and ``direction_sign`` the sign of the statistic.
    """

    statistic: float
    p_value: float
    contrast: float
    std_error: float
    direction_sign: int


def abelson_tukey_coeffs(n: int) -> np.ndarray:
    """Maximin linear-contrast coefficients for a monotone alternative.

    c(t) = sqrt(t (1 - t/n)) - sqrt((t+1) (1 - (t+1)/n)) for t = 0..n-1
    (Abelson & Tukey 1963).  The coefficients telescope to sum zero and
    are antisymmetric about the series midpoint.
    """
    if n < 3:
        raise ValueError(f"series length must be at least 3, got {n}")
    t = np.arange(n + 1, dtype=np.float64)
    f = np.sqrt(t * (1.0 - t / n))
    return f[:-1] - f[1:]


@lru_cache(maxsize=None)
def _window_weights(t_len: int, max_lag: int) -> np.ndarray:
    """Combined weight a_l applied to the lag-l residual autocovariance.

    a_l collects the Bartlett window w_l = 1 - l/(L+1), the contrast
    cross-products g_l = sum_t c(t) c(t+l), and the factor 2 for the two
    symmetric off-diagonals, so the variance estimate is sum_l a_l ghat_l.
    """
    c = abelson_tukey_coeffs(t_len)
    weights = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        g = float((c[: t_len - lag] * c[lag:]).sum())
        w = 1.0 - lag / (max_lag + 1.0)
        weights[lag] = (2.0 if lag > 0 else 1.0) * w * g
    return weights


@lru_cache(maxsize=None)
def _small_sample_factor(t_len: int, max_lag: int) -> float:
    """Rescaling that makes the variance estimate exactly unbiased for iid noise.

    With e the OLS-line residuals of iid noise, E[ghat_l] is sigma^2 times
    a known function of the hat matrix; the raw weighted sum therefore has
    expectation below sigma^2 sum c^2.  The factor is their exact ratio and
    tends to 1 as the series length grows.
    """
    c = abelson_tukey_coeffs(t_len)
    weights = _window_weights(t_len, max_lag)
    t = np.arange(t_len, dtype=np.float64)
    tbar = t.mean()
    stt = ((t - tbar) ** 2).sum()
    expected = 0.0
    for lag in range(max_lag + 1):
        # tr(B_l M)/T with B_l the symmetrised lag-l indicator and
        # M = I - H the OLS projection; H[s, t] = 1/T + (s-tbar)(t-tbar)/stt
        h_diag_sum = (t_len - lag) / t_len + float(
            ((t[: t_len - lag] - tbar) * (t[lag:] - tbar)).sum()
        ) / stt
        trace = (1.0 if lag == 0 else 0.0) * t_len - h_diag_sum
        expected += weights[lag] * trace / t_len
    return float((c ** 2).sum() / expected)


def two_sided_pvalue(statistic: float) -> float:
    """Two-sided p-value 2 (1 - Phi(|statistic|)) under a standard normal.

    Evaluated through the lower-tail CDF to keep full relative accuracy in
    the far tail; underflow is clamped to the smallest positive double so
    the result stays in (0, 1].
    """
    statistic = float(statistic)
    if not np.isfinite(statistic):
        raise ValueError(f"statistic must be finite, got {statistic}")
    return max(2.0 * float(ndtr(-abs(statistic))), _TINY)


def trend_statistics(
    series: np.ndarray,
    max_lag: int = DEFAULT_MAX_LAG,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
):
    """Run the trend test on every row of a (num_series, T) array.

    Returns ``(statistic, p_value, contrast, std_error, status)`` arrays.
    Status 0 is a regular result; 1 marks an exactly constant series
    (statistic 0, p-value 1 by convention); 2 marks a degenerate series
    whose variance estimate fell at or below ``variance_floor`` (its
    statistic and p-value are NaN and the series should be excluded).
    """
    series = np.atleast_2d(np.asarray(series, dtype=np.float64))
    n, t_len = series.shape
    if t_len < 3:
        raise ValueError(f"series length must be at least 3, got {t_len}")
    if not 0 <= max_lag <= t_len - 2:
        raise ValueError(f"max_lag must be in [0, {t_len - 2}], got {max_lag}")
    if not np.isfinite(series).all():
        raise ValueError("series contains non-finite values")

    weights = _window_weights(t_len, max_lag)
    contrast, vraw, const = kernels.trend_batch(series, abelson_tukey_coeffs(t_len), weights)
    variance = vraw * _small_sample_factor(t_len, max_lag)

    statistic = np.full(n, np.nan)
    p_value = np.full(n, np.nan)
    std_error = np.full(n, np.nan)
    status = np.full(n, 2, dtype=np.uint8)

    const_mask = const == 1
    ok = ~const_mask & (variance > variance_floor)
    std_error[ok] = np.sqrt(variance[ok])
    statistic[ok] = contrast[ok] / std_error[ok]
    p_value[ok] = np.maximum(2.0 * ndtr(-np.abs(statistic[ok])), _TINY)
    status[ok] = 0

    # exactly constant series: the null signal itself
    statistic[const_mask] = 0.0
    p_value[const_mask] = 1.0
    contrast[const_mask] = 0.0
    std_error[const_mask] = 0.0
    status[const_mask] = 1
    return statistic, p_value, contrast, std_error, status


def brillinger_statistic(
    series,
    max_lag: int = DEFAULT_MAX_LAG,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
) -> TrendResult:
    """Trend test for one series; see the module docstring for the method.

    Raises :class:`DegenerateSeriesError` when the variance estimate is not
    positive (at or below ``variance_floor``), e.g. for an exact straight
    line.  An exactly constant series short-circuits to statistic 0 and
    p-value 1.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1:
        raise ValueError("expected a one-dimensional series")
    stat, p, con, se, status = trend_statistics(series[None, :], max_lag, variance_floor)
    if status[0] == 2:
        raise DegenerateSeriesError(
            "variance estimate is not positive; series is numerically degenerate"
        )
    return TrendResult(
        statistic=float(stat[0]),
        p_value=float(p[0]),
        contrast=float(con[0]),
        std_error=float(se[0]),
        direction_sign=int(np.sign(stat[0])),
    )
