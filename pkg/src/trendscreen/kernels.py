"""Hot numeric kernels, with numba-compiled and pure-numpy implementations.

The numba backend is used when numba imports successfully; setting the
environment variable ``TRENDSCREEN_DISABLE_NUMBA`` to a truthy value
(anything other than ``0``/``false``/``no``/empty) forces the numpy
fallback.  The flag is read once at import time.

Both backends are serial and free of threaded BLAS calls, so results are
reproducible regardless of thread-count environment variables.  The two
backends agree to floating-point roundoff (different summation orders),
not bit-for-bit; byte-level determinism is guaranteed per backend.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    _HAVE_NUMBA = False


def _numba_disabled() -> bool:
    flag = os.environ.get("TRENDSCREEN_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("", "0", "false", "no")


USE_NUMBA = _HAVE_NUMBA and not _numba_disabled()


def active_backend() -> str:
    """Name of the kernel backend selected at import: 'numba' or 'numpy'."""
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

_VGRAM_CHUNK = 256  # rows per chunk; fixed so accumulation order is fixed


def _np_variogram_accumulate(cols, rows, values, bin_width, max_lag, nbins):
    n = cols.shape[0]
    sqsum = np.zeros(nbins)
    count = np.zeros(nbins, dtype=np.int64)
    for start in range(0, n, _VGRAM_CHUNK):
        stop = min(start + _VGRAM_CHUNK, n)
        for i in range(start, stop):
            dx = cols[i + 1 :] - cols[i]
            dy = rows[i + 1 :] - rows[i]
            d = np.sqrt(dx * dx + dy * dy)
            keep = d <= max_lag
            if not keep.any():
                continue
            b = np.floor(d[keep] / bin_width + 0.5).astype(np.int64)
            dv = values[i + 1 :][keep] - values[i]
            sqsum += np.bincount(b, weights=dv * dv, minlength=nbins)
            count += np.bincount(b, minlength=nbins)
    return sqsum, count


def _np_trend_batch(series, coeffs, acov_weights):
    n, t_len = series.shape
    t = np.arange(t_len, dtype=np.float64)
    tbar = t.mean()
    stt = ((t - tbar) ** 2).sum()
    is_const = (series.max(axis=1) == series.min(axis=1)).astype(np.uint8)
    ybar = series.mean(axis=1)
    centered = series - ybar[:, None]
    # coeffs sum to zero, so centering changes nothing in exact arithmetic
    # but avoids cancellation when the series has a large offset
    contrast = (centered * coeffs).sum(axis=1)
    slope = (centered * (t - tbar)).sum(axis=1) / stt
    resid = centered - slope[:, None] * (t - tbar)
    vraw = np.zeros(n)
    for lag in range(acov_weights.shape[0]):
        acov = (resid[:, : t_len - lag] * resid[:, lag:]).sum(axis=1) / t_len
        vraw += acov_weights[lag] * acov
    return contrast, vraw, is_const


def _np_kron_transform(eps, loc_factor, season_factor, block_factor):
    out = np.einsum("ab,bkm->akm", loc_factor, eps, optimize=False)
    out = np.einsum("cd,jdm->jcm", season_factor, out, optimize=False)
    out = np.einsum("jke,fe->jkf", out, block_factor, optimize=False)
    return np.ascontiguousarray(out)


def _np_cholesky_lower(mat):
    n = mat.shape[0]
    low = np.zeros_like(mat)
    for j in range(n):
        diag = mat[j, j] - np.einsum("k,k->", low[j, :j], low[j, :j], optimize=False)
        if diag <= 0.0:
            return low, False
        low[j, j] = math.sqrt(diag)
        if j + 1 < n:
            proj = np.einsum("ik,k->i", low[j + 1 :, :j], low[j, :j], optimize=False)
            low[j + 1 :, j] = (mat[j + 1 :, j] - proj) / low[j, j]
    return low, True


# ---------------------------------------------------------------------------
# numba implementations (same math, explicit loops)
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def _nb_variogram_accumulate(cols, rows, values, bin_width, max_lag, nbins):
        n = cols.shape[0]
        sqsum = np.zeros(nbins)
        count = np.zeros(nbins, dtype=np.int64)
        for i in range(n - 1):
            ci = cols[i]
            ri = rows[i]
            vi = values[i]
            for j in range(i + 1, n):
                dx = cols[j] - ci
                dy = rows[j] - ri
                d = math.sqrt(dx * dx + dy * dy)
                if d > max_lag:
                    continue
                b = int(math.floor(d / bin_width + 0.5))
                dv = values[j] - vi
                sqsum[b] += dv * dv
                count[b] += 1
        return sqsum, count

    @njit(cache=True)
    def _nb_trend_batch(series, coeffs, acov_weights):
        n, t_len = series.shape
        n_lags = acov_weights.shape[0]
        tbar = 0.5 * (t_len - 1)
        stt = 0.0
        for t in range(t_len):
            stt += (t - tbar) ** 2
        contrast = np.empty(n)
        vraw = np.empty(n)
        is_const = np.zeros(n, dtype=np.uint8)
        resid = np.empty(t_len)
        for s in range(n):
            lo = series[s, 0]
            hi = series[s, 0]
            ysum = 0.0
            for t in range(t_len):
                y = series[s, t]
                if y < lo:
                    lo = y
                if y > hi:
                    hi = y
                ysum += y
            if lo == hi:
                is_const[s] = 1
            ybar = ysum / t_len
            # centering is a no-op in exact arithmetic (coeffs sum to zero)
            # but avoids cancellation when the series has a large offset
            csum = 0.0
            sty = 0.0
            for t in range(t_len):
                yc = series[s, t] - ybar
                csum += coeffs[t] * yc
                sty += (t - tbar) * yc
            contrast[s] = csum
            slope = sty / stt
            for t in range(t_len):
                resid[t] = series[s, t] - ybar - slope * (t - tbar)
            v = 0.0
            for lag in range(n_lags):
                acov = 0.0
                for t in range(t_len - lag):
                    acov += resid[t] * resid[t + lag]
                v += acov_weights[lag] * acov / t_len
            vraw[s] = v
        return contrast, vraw, is_const

    @njit(cache=True)
    def _nb_kron_transform(eps, loc_factor, season_factor, block_factor):
        n_loc, n_season, n_block = eps.shape
        flat = eps.reshape(n_loc, n_season * n_block)
        out1 = np.zeros((n_loc, n_season * n_block))
        for a in range(n_loc):
            for b in range(n_loc):
                w = loc_factor[a, b]
                if w != 0.0:
                    for q in range(n_season * n_block):
                        out1[a, q] += w * flat[b, q]
        cube = out1.reshape(n_loc, n_season, n_block)
        out2 = np.zeros((n_loc, n_season, n_block))
        for j in range(n_loc):
            for c in range(n_season):
                for d in range(n_season):
                    w = season_factor[c, d]
                    if w != 0.0:
                        for q in range(n_block):
                            out2[j, c, q] += w * cube[j, d, q]
        rows = out2.reshape(n_loc * n_season, n_block)
        out3 = np.zeros((n_loc * n_season, n_block))
        for r in range(n_loc * n_season):
            for e in range(n_block):
                w = rows[r, e]
                if w != 0.0:
                    for f in range(n_block):
                        out3[r, f] += w * block_factor[f, e]
        return out3.reshape(n_loc, n_season, n_block)

    @njit(cache=True)
    def _nb_cholesky_lower(mat):
        n = mat.shape[0]
        low = np.zeros_like(mat)
        for j in range(n):
            acc = 0.0
            for k in range(j):
                acc += low[j, k] * low[j, k]
            diag = mat[j, j] - acc
            if diag <= 0.0:
                return low, False
            dj = math.sqrt(diag)
            low[j, j] = dj
            for i in range(j + 1, n):
                acc = 0.0
                for k in range(j):
                    acc += low[i, k] * low[j, k]
                low[i, j] = (mat[i, j] - acc) / dj
        return low, True


# ---------------------------------------------------------------------------
# dispatching wrappers
# ---------------------------------------------------------------------------


def variogram_accumulate(cols, rows, values, bin_width, max_lag, nbins):
    """Accumulate squared differences of a point field into distance bins.

    Enumerates all unordered point pairs with Euclidean separation at most
    ``max_lag``; pair (i, j) lands in bin ``floor(d / bin_width + 0.5)``.
    Returns ``(sqsum, count)`` arrays of length ``nbins``.
    """
    cols = np.ascontiguousarray(cols, dtype=np.float64)
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    impl = _nb_variogram_accumulate if USE_NUMBA else _np_variogram_accumulate
    return impl(cols, rows, values, float(bin_width), float(max_lag), int(nbins))


def trend_batch(series, coeffs, acov_weights):
    """Per-row trend contrast and lag-window variance for a batch of series.

    For each row y of ``series``: the contrast ``sum_t coeffs[t] * y[t]``,
    the weighted sum ``sum_l acov_weights[l] * acovhat(l)`` of residual
    autocovariances (residuals from an ordinary least-squares line,
    ``acovhat(l) = sum_t e[t] e[t+l] / T``), and a flag marking exactly
    constant rows.
    """
    series = np.ascontiguousarray(series, dtype=np.float64)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    acov_weights = np.ascontiguousarray(acov_weights, dtype=np.float64)
    impl = _nb_trend_batch if USE_NUMBA else _np_trend_batch
    return impl(series, coeffs, acov_weights)


def kron_transform(eps, loc_factor, season_factor, block_factor):
    """Apply one square factor along each axis of a (loc, season, block) array.

    Equivalent to multiplying the vectorised array by the Kronecker product
    of the three factors, without materialising it.
    """
    eps = np.ascontiguousarray(eps, dtype=np.float64)
    loc_factor = np.ascontiguousarray(loc_factor, dtype=np.float64)
    season_factor = np.ascontiguousarray(season_factor, dtype=np.float64)
    block_factor = np.ascontiguousarray(block_factor, dtype=np.float64)
    impl = _nb_kron_transform if USE_NUMBA else _np_kron_transform
    return impl(eps, loc_factor, season_factor, block_factor)


def cholesky_lower(mat):
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises ``np.linalg.LinAlgError`` if a non-positive pivot is hit.
    Hand-rolled (no LAPACK) so the factor is identical whatever the
    BLAS thread configuration.
    """
    mat = np.ascontiguousarray(mat, dtype=np.float64)
    impl = _nb_cholesky_lower if USE_NUMBA else _np_cholesky_lower
    low, ok = impl(mat)
    if not ok:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return low
