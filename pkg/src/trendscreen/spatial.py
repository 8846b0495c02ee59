"""Empirical semivariogram, range estimation, and block partitioning.

The semivariogram is the standard Matheron estimator

    gamma_hat(h) = (1 / (2 |N_h|)) sum_{(i,j) in N_h} (Z(s_i) - Z(s_j))^2

i.e. *with* the conventional one-half factor (some texts drop it; the
factor rescales gamma_hat uniformly and leaves the estimated range
unchanged).  Pairs are binned by Euclidean distance, rounding to the
nearest multiple of ``bin_width``; only pairs at distance <= ``max_lag``
are counted and empty bins are omitted.  See Cressie (1993, ch. 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


class NoSpatialVarianceError(ValueError):
    """Raised when the field is constant: the semivariogram is identically 0."""


@dataclass(frozen=True)
class Variogram:
    lags: np.ndarray  # (B,) bin centers, strictly increasing, pixel units
    gamma: np.ndarray  # (B,) semivariogram estimates, >= 0
    pair_counts: np.ndarray  # (B,) pairs per bin, > 0
    max_lag: float
    bin_width: float

    @property
    def n_bins(self) -> int:
        return self.lags.shape[0]


@dataclass(frozen=True)
class RangeEstimate:
    """Estimated range: smallest lag reaching ``sill_fraction`` of the sill.

    ``reached`` is False when no binned lag attains the target, in which
    case ``value`` falls back to the search limit ``max_lag``.
    """

    value: float
    reached: bool
    sill: float


def empirical_semivariogram(coords, values, max_lag: float = 25.0,
                            bin_width: float = 1.0) -> Variogram:
    """Binned Matheron semivariogram of a scattered field.

    Parameters
    ----------
    coords : (n, 2) array-like
        Pixel (col, row) positions, in pixel units.
    values : (n,) array-like
        Field value per pixel.
    max_lag, bin_width : float
        Largest pair distance considered and the bin spacing.
    """
    coords = np.asarray(coords, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("coords must have shape (n, 2)")
    if values.shape != (coords.shape[0],):
        raise ValueError("values must have one entry per coordinate")
    if coords.shape[0] < 2:
        raise ValueError("at least 2 pixels are required")
    if max_lag <= 0 or bin_width <= 0:
        raise ValueError("max_lag and bin_width must be positive")
    nbins = int(np.floor(max_lag / bin_width + 0.5)) + 1
    sqsum, count = kernels.variogram_accumulate(
        coords[:, 0], coords[:, 1], values, bin_width, max_lag, nbins
    )
    keep = count > 0
    idx = np.flatnonzero(keep)
    return Variogram(
        lags=idx * bin_width,
        gamma=sqsum[keep] / (2.0 * count[keep]),
        pair_counts=count[keep],
        max_lag=float(max_lag),
        bin_width=float(bin_width),
    )


def estimate_range(v: Variogram, sill_fraction: float = 0.95) -> RangeEstimate:
    """Range of a binned semivariogram, relative to an empirical sill.

    The sill is estimated as the mean gamma over the last quartile of the
    reported bins (robust to tail noise); the range is the smallest bin
    lag whose gamma reaches ``sill_fraction`` of it.
    """
    if not 0 < sill_fraction < 1:
        raise ValueError(f"sill_fraction must lie in (0, 1), got {sill_fraction}")
    if v.n_bins < 3:
        raise ValueError(f"need at least 3 variogram bins, got {v.n_bins}")
    if (v.gamma == 0).all():
        raise NoSpatialVarianceError("no spatial variance")
    tail = max(1, v.n_bins // 4)
    sill = float(v.gamma[-tail:].mean())
    hits = np.flatnonzero(v.gamma >= sill_fraction * sill)
    if hits.size:
        return RangeEstimate(value=float(v.lags[hits[0]]), reached=True, sill=sill)
    return RangeEstimate(value=float(v.max_lag), reached=False, sill=sill)


@dataclass(frozen=True)
class Partition:
    """Assignment of pixels to D x D blocks, empty blocks omitted.

    Pixels are stored sorted by (block, pixel_id); block ``b`` owns rows
    ``starts[b]:starts[b+1]`` of the pixel arrays.  Block identifiers are
    consecutive integers in sorted (block column, block row) order, with
    the grid-unit block coordinates kept alongside.
    """

    block_size: int
    block_keys: np.ndarray  # (m, 2) int: (col // D, row // D)
    starts: np.ndarray  # (m + 1,)
    pixel_ids: np.ndarray  # (L,)
    cols: np.ndarray  # (L,)
    rows: np.ndarray  # (L,)

    @property
    def m(self) -> int:
        return self.block_keys.shape[0]

    @property
    def n_i(self) -> np.ndarray:
        return np.diff(self.starts)


def partition(pixel_ids, cols, rows, block_size: int) -> Partition:
    """Partition pixels into D x D grid blocks by integer coordinates.

    A pixel at (col, row) belongs to block (col // D, row // D); blocks
    with no pixels simply do not appear.
    """
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    pixel_ids = np.asarray(pixel_ids, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    rows = np.asarray(rows, dtype=np.int64)
    if not (pixel_ids.shape == cols.shape == rows.shape):
        raise ValueError("pixel_ids, cols, rows must have identical shapes")
    bcol = cols // block_size
    brow = rows // block_size
    order = np.lexsort((pixel_ids, brow, bcol))
    bcol, brow = bcol[order], brow[order]
    if order.size == 0:
        return Partition(block_size, np.empty((0, 2), np.int64),
                         np.zeros(1, np.int64), pixel_ids, cols, rows)
    new_block = np.ones(order.size, dtype=bool)
    new_block[1:] = (bcol[1:] != bcol[:-1]) | (brow[1:] != brow[:-1])
    firsts = np.flatnonzero(new_block)
    starts = np.append(firsts, order.size).astype(np.int64)
    keys = np.column_stack([bcol[firsts], brow[firsts]])
    return Partition(
        block_size=int(block_size),
        block_keys=keys,
        starts=starts,
        pixel_ids=pixel_ids[order],
        cols=cols[order],
        rows=rows[order],
    )
