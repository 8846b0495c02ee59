"""Parsing and preprocessing of gridded twice-monthly series.

Input is a long-format CSV with header ``pixel_id,col,row,year,period,ndvi``:
one row per observation, 24 periods per year (two per month), values on
the native index scale [-1, 1].  Missing pixels (open water) are simply
absent; rows may appear in any order.

Preprocessing clamps negative values to zero and rescales by 1000 (both
applied exactly once), then drops pixels that repeat the identical
24-period vector over enough consecutive years, a telltale of data-entry
or instrument faults.  Seasonal averaging maps periods to the four
precipitation seasons (first dry Jan-Mar, long rains Apr-Jun, second dry
Jul-Oct, short rains Nov-Dec) and keeps only pixels with a complete
season x year panel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

PERIODS_PER_YEAR = 24
SEASON_LABELS = ("first_dry", "long_rain", "second_dry", "short_rain")
# period -> season map: periods 1-6, 7-12, 13-20, 21-24 (two periods/month)
SEASON_PERIOD_SLICES = (slice(0, 6), slice(6, 12), slice(12, 20), slice(20, 24))

EXPECTED_COLUMNS = ["pixel_id", "col", "row", "year", "period", "ndvi"]

REASON_QA = "qa_identical_years"
REASON_MISSING = "missing_seasonal_value"
REASON_DEGENERATE = "degenerate_series"


class GridFormatError(ValueError):
    """Malformed or inconsistent input grid CSV."""


@dataclass
class RawGrid:
    """Dense per-pixel observation cube; NaN marks unobserved slots."""

    pixel_ids: np.ndarray  # (n,)
    cols: np.ndarray  # (n,)
    rows: np.ndarray  # (n,)
    values: np.ndarray  # (n, years, PERIODS_PER_YEAR), NaN where missing
    years: int


@dataclass
class CleanGrid:
    """Preprocessed grid: values clamped to [0, 1000], QA-failing pixels dropped."""

    pixel_ids: np.ndarray
    cols: np.ndarray
    rows: np.ndarray
    values: np.ndarray
    years: int
    dropped: list  # [(pixel_id, reason)]


@dataclass
class SeasonalPanel:
    """Per-pixel, per-season yearly averages for fully observed pixels."""

    pixel_ids: np.ndarray  # (n_kept,)
    cols: np.ndarray
    rows: np.ndarray
    values: np.ndarray  # (n_kept, 4, years)
    years: int
    excluded: list  # [(pixel_id, reason)] pixels with incomplete panels


def _require_integral(frame, column, numeric):
    bad = numeric.isna() | (numeric % 1 != 0)
    if bad.any():
        line = int(bad.idxmax()) + 2  # +1 header, +1 one-based
        raise GridFormatError(
            f"line {line}: column '{column}' has non-integer value "
            f"{frame[column].iloc[int(bad.idxmax())]!r}"
        )
    return numeric.astype(np.int64)


def parse_grid(stream) -> RawGrid:
    """Parse the observation CSV into a dense RawGrid.

    ``stream`` is a text file object or path.  Raises
    :class:`GridFormatError` with the offending line number on malformed
    rows, duplicate (pixel, year, period) keys, out-of-range periods or
    index values, and pixels with inconsistent coordinates.
    """
    try:
        frame = pd.read_csv(stream, dtype=str, skipinitialspace=True)
    except Exception as exc:
        raise GridFormatError(f"could not read CSV: {exc}") from exc
    if list(frame.columns) != EXPECTED_COLUMNS:
        raise GridFormatError(
            f"expected header {','.join(EXPECTED_COLUMNS)}, got {','.join(frame.columns)}"
        )
    if len(frame) == 0:
        raise GridFormatError("no observation rows")
    if frame.isna().any().any():
        row = int(frame.isna().any(axis=1).idxmax())
        raise GridFormatError(f"line {row + 2}: missing field")

    pixel = _require_integral(frame, "pixel_id", pd.to_numeric(frame["pixel_id"], errors="coerce"))
    col = _require_integral(frame, "col", pd.to_numeric(frame["col"], errors="coerce"))
    row = _require_integral(frame, "row", pd.to_numeric(frame["row"], errors="coerce"))
    year = _require_integral(frame, "year", pd.to_numeric(frame["year"], errors="coerce"))
    period = _require_integral(frame, "period", pd.to_numeric(frame["period"], errors="coerce"))
    ndvi = pd.to_numeric(frame["ndvi"], errors="coerce")
    if ndvi.isna().any():
        line = int(ndvi.isna().idxmax()) + 2
        raise GridFormatError(f"line {line}: ndvi is not a number")

    def _fail_where(bad, message):
        if bad.any():
            raise GridFormatError(f"line {int(np.argmax(bad)) + 2}: {message}")

    _fail_where((period < 1) | (period > PERIODS_PER_YEAR), "period out of range (1..24)")
    _fail_where(year < 0, "year must be a 0-based non-negative index")
    _fail_where((ndvi < -1) | (ndvi > 1), "ndvi outside [-1, 1]")

    key = pd.DataFrame({"pixel_id": pixel, "year": year, "period": period})
    dup = key.duplicated(keep="first")
    if dup.any():
        line = int(dup.idxmax()) + 2
        k = key.iloc[int(dup.idxmax())]
        raise GridFormatError(
            f"line {line}: duplicate observation for pixel {k.pixel_id}, "
            f"year {k.year}, period {k.period}"
        )

    coords = pd.DataFrame({"pixel_id": pixel, "col": col, "row": row}).drop_duplicates()
    if coords["pixel_id"].duplicated().any():
        bad = coords["pixel_id"][coords["pixel_id"].duplicated()].iloc[0]
        raise GridFormatError(f"pixel {bad} appears with conflicting coordinates")
    coords = coords.sort_values("pixel_id").reset_index(drop=True)

    years = int(year.max()) + 1
    n = len(coords)
    index_of = pd.Series(np.arange(n), index=coords["pixel_id"].to_numpy())
    values = np.full((n, years, PERIODS_PER_YEAR), np.nan)
    values[index_of[pixel].to_numpy(), year.to_numpy(), period.to_numpy() - 1] = (
        ndvi.to_numpy(dtype=np.float64)
    )
    return RawGrid(
        pixel_ids=coords["pixel_id"].to_numpy(),
        cols=coords["col"].to_numpy(),
        rows=coords["row"].to_numpy(),
        values=values,
        years=years,
    )


def _qa_identical_run(values: np.ndarray, qa_consecutive_years: int) -> np.ndarray:
    """Pixels with >= qa_consecutive_years consecutive identical year vectors.

    Identity is exact float equality of the full 24-period vector; years
    with any missing period never match anything.
    """
    n, years, _ = values.shape
    if years < 2:
        return np.zeros(n, dtype=bool)
    with np.errstate(invalid="ignore"):
        eq = (values[:, :-1, :] == values[:, 1:, :]).all(axis=2)  # (n, years-1)
    run = np.zeros(n, dtype=np.int64)
    best = np.zeros(n, dtype=np.int64)
    for t in range(eq.shape[1]):
        run = np.where(eq[:, t], run + 1, 0)
        best = np.maximum(best, run)
    # a run of k equal consecutive pairs means k + 1 identical years
    return best + 1 >= qa_consecutive_years


def preprocess(grid: RawGrid, qa_consecutive_years: int = 2) -> CleanGrid:
    """Clamp negatives to zero, rescale by 1000, drop QA-failing pixels.

    Raises ``ValueError`` if any value lies outside [-1, 1]; this guards
    against applying the rescale twice.
    """
    if qa_consecutive_years < 2:
        raise ValueError("qa_consecutive_years must be >= 2")
    with np.errstate(invalid="ignore"):
        out_of_range = (grid.values < -1) | (grid.values > 1)
    if out_of_range.any():
        raise ValueError("values outside [-1, 1]; input already preprocessed?")
    flagged = _qa_identical_run(grid.values, qa_consecutive_years)
    keep = ~flagged
    scaled = np.maximum(grid.values[keep], 0.0) * 1000.0
    dropped = [(int(pid), REASON_QA) for pid in grid.pixel_ids[flagged]]
    return CleanGrid(
        pixel_ids=grid.pixel_ids[keep],
        cols=grid.cols[keep],
        rows=grid.rows[keep],
        values=scaled,
        years=grid.years,
        dropped=dropped,
    )


def seasonal_averages(grid: CleanGrid) -> SeasonalPanel:
    """Seasonal yearly means; pixels missing any seasonal value are excluded."""
    n = grid.pixel_ids.shape[0]
    panel = np.empty((n, len(SEASON_PERIOD_SLICES), grid.years))
    for k, sl in enumerate(SEASON_PERIOD_SLICES):
        panel[:, k, :] = grid.values[:, :, sl].mean(axis=2)
    complete = np.isfinite(panel).all(axis=(1, 2))
    excluded = [(int(pid), REASON_MISSING) for pid in grid.pixel_ids[~complete]]
    return SeasonalPanel(
        pixel_ids=grid.pixel_ids[complete],
        cols=grid.cols[complete],
        rows=grid.rows[complete],
        values=panel[complete],
        years=grid.years,
        excluded=excluded,
    )


def pixel_means(grid: CleanGrid) -> np.ndarray:
    """Per-pixel mean of all observed values across every year and period."""
    flat = grid.values.reshape(grid.values.shape[0], -1)
    with np.errstate(invalid="ignore"):
        return np.nanmean(flat, axis=1)
