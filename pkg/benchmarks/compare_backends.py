"""Benchmark the numba kernels against the pure-numpy fallback.

Runs each hot kernel under both implementations on representative sizes,
checks agreement, and prints timings.  Usage:

    python benchmarks/compare_backends.py
"""

import time

import numpy as np

from trendscreen import kernels
from trendscreen.trend import _window_weights, abelson_tukey_coeffs

if not kernels._HAVE_NUMBA:
    raise SystemExit("numba is not importable; nothing to compare")


def timed(fn, *args, repeats=3):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return out, best


def rel_diff(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.abs(a), 1e-30)
    return float(np.max(np.abs(a - b) / scale))


def main():
    rng = np.random.default_rng(0)
    rows = []

    # variogram accumulation: a 60x60 field, ~6.5M pixel pairs
    side = 60
    g = np.arange(side, dtype=float)
    cc, rr = np.meshgrid(g, g)
    cols, rws = cc.ravel(), rr.ravel()
    vals = rng.standard_normal(cols.size)
    args = (cols, rws, vals, 1.0, 25.0, 26)
    kernels._nb_variogram_accumulate(*args)  # JIT warm-up
    (s_nb, c_nb), t_nb = timed(kernels._nb_variogram_accumulate, *args)
    (s_np, c_np), t_np = timed(kernels._np_variogram_accumulate, *args)
    rows.append(("variogram_accumulate (3600 px)", t_np, t_nb,
                 max(rel_diff(s_np, s_nb), rel_diff(c_np, c_nb))))

    # batched trend statistics: 200k series of length 25
    series = rng.standard_normal((200_000, 25))
    c = abelson_tukey_coeffs(25)
    w = _window_weights(25, 5)
    kernels._nb_trend_batch(series[:100], c, w)
    out_nb, t_nb = timed(kernels._nb_trend_batch, series, c, w)
    out_np, t_np = timed(kernels._np_trend_batch, series, c, w)
    rows.append(("trend_batch (200k x 25)", t_np, t_nb,
                 max(rel_diff(a, b) for a, b in zip(out_np, out_nb))))

    # Kronecker-structured noise transform at the largest simulated size
    n_i, m = 400, 100
    eps = rng.standard_normal((n_i, 4, m))
    a1 = np.linalg.cholesky(np.exp(-rng.random((n_i, n_i)) * 0) + n_i * np.eye(n_i))
    a2 = rng.standard_normal((4, 4))
    a3 = rng.standard_normal((m, m))
    kernels._nb_kron_transform(eps[:10, :, :10], a1[:10, :10], a2, a3[:10, :10])
    out_nb, t_nb = timed(kernels._nb_kron_transform, eps, a1, a2, a3)
    out_np, t_np = timed(kernels._np_kron_transform, eps, a1, a2, a3)
    rows.append(("kron_transform (400, 4, 100)", t_np, t_nb,
                 rel_diff(out_np, out_nb)))

    # dense Cholesky of the largest within-block covariance
    xy = np.array([(x, y) for y in range(20) for x in range(20)], float)
    d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
    cov = np.exp(-d / 20.0)
    kernels._nb_cholesky_lower(cov[:20, :20].copy())
    (l_nb, _), t_nb = timed(kernels._nb_cholesky_lower, cov)
    (l_np, _), t_np = timed(kernels._np_cholesky_lower, cov)
    rows.append(("cholesky_lower (400 x 400)", t_np, t_nb, rel_diff(l_np, l_nb)))

    print(f"{'kernel':34} {'numpy':>10} {'numba':>10} {'speedup':>8} {'rel diff':>10}")
    for name, t_np, t_nb, diff in rows:
        print(f"{name:34} {t_np * 1e3:9.1f}ms {t_nb * 1e3:9.1f}ms "
              f"{t_np / t_nb:7.1f}x {diff:10.2e}")


if __name__ == "__main__":
    main()
