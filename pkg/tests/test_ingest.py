import io

import numpy as np
import pytest

from trendscreen.ingest import (
    GridFormatError,
    REASON_MISSING,
    REASON_QA,
    SEASON_PERIOD_SLICES,
    parse_grid,
    pixel_means,
    preprocess,
    seasonal_averages,
)

HEADER = "pixel_id,col,row,year,period,ndvi\n"


def csv_of(rows):
    return io.StringIO(HEADER + "".join(f"{r}\n" for r in rows))


def full_pixel_rows(pixel_id, col, row, years, value_fn):
    rows = []
    for year in range(years):
        for period in range(1, 25):
            rows.append(f"{pixel_id},{col},{row},{year},{period},{value_fn(year, period)}")
    return rows


class TestParseGrid:
    def test_single_row(self):
        grid = parse_grid(csv_of(["7,3,5,0,1,0.42"]))
        assert grid.years == 1
        assert grid.pixel_ids.tolist() == [7]
        assert grid.cols.tolist() == [3] and grid.rows.tolist() == [5]
        assert grid.values[0, 0, 0] == pytest.approx(0.42)
        assert np.isnan(grid.values[0, 0, 1:]).all()

    def test_duplicate_key_rejected(self):
        stream = csv_of(["1,0,0,0,1,0.5", "1,0,0,0,1,0.6"])
        with pytest.raises(GridFormatError, match="duplicate"):
            parse_grid(stream)

    def test_period_out_of_range(self):
        with pytest.raises(GridFormatError, match="period out of range"):
            parse_grid(csv_of(["1,0,0,0,25,0.5"]))

    def test_malformed_row_reports_line(self):
        stream = csv_of(["1,0,0,0,1,0.5", "1,0,0,0,2,abc"])
        with pytest.raises(GridFormatError, match="line 3"):
            parse_grid(stream)

    def test_ndvi_out_of_range(self):
        with pytest.raises(GridFormatError, match=r"\[-1, 1\]"):
            parse_grid(csv_of(["1,0,0,0,1,1.5"]))

    def test_conflicting_coordinates(self):
        stream = csv_of(["1,0,0,0,1,0.5", "1,2,0,0,2,0.5"])
        with pytest.raises(GridFormatError, match="conflicting coordinates"):
            parse_grid(stream)

    def test_wrong_header(self):
        with pytest.raises(GridFormatError, match="header"):
            parse_grid(io.StringIO("a,b\n1,2\n"))

    def test_rows_any_order(self):
        rows = ["2,1,0,1,2,0.3", "1,0,0,0,1,0.1", "2,1,0,0,2,0.2"]
        grid = parse_grid(csv_of(rows))
        assert grid.years == 2
        assert grid.pixel_ids.tolist() == [1, 2]
        assert grid.values[1, 0, 1] == pytest.approx(0.2)
        assert grid.values[1, 1, 1] == pytest.approx(0.3)


class TestPreprocess:
    def test_negative_clamped_to_zero(self):
        grid = parse_grid(csv_of(["1,0,0,0,1,-0.15"]))
        clean = preprocess(grid)
        assert clean.values[0, 0, 0] == 0.0

    def test_rescale_by_1000(self):
        grid = parse_grid(csv_of(["1,0,0,0,1,0.5"]))
        clean = preprocess(grid)
        assert clean.values[0, 0, 0] == 500.0

    def test_qa_drop_on_identical_consecutive_years(self):
        rows = full_pixel_rows(9, 0, 0, 5, lambda y, p: 0.2 if y in (3, 4) else 0.01 * y + 0.001 * p)
        grid = parse_grid(csv_of(rows))
        clean = preprocess(grid, qa_consecutive_years=2)
        assert clean.pixel_ids.size == 0
        assert clean.dropped == [(9, REASON_QA)]

    def test_qa_threshold_not_met(self):
        # years 3 and 4 identical; requiring 3 consecutive identical years keeps it
        rows = full_pixel_rows(9, 0, 0, 5, lambda y, p: 0.2 if y in (3, 4) else 0.01 * y + 0.001 * p)
        clean = preprocess(parse_grid(csv_of(rows)), qa_consecutive_years=3)
        assert clean.pixel_ids.tolist() == [9]
        assert clean.dropped == []

    def test_years_with_missing_periods_never_match(self):
        # identical values but year 3 lacks period 24: no QA drop
        rows = [r for r in full_pixel_rows(5, 0, 0, 5, lambda y, p: 0.2)
                if not r.startswith("5,0,0,3,24")]
        clean = preprocess(parse_grid(csv_of(rows)), qa_consecutive_years=5)
        assert clean.pixel_ids.tolist() == [5]

    def test_double_preprocess_guarded(self):
        grid = parse_grid(csv_of(["1,0,0,0,1,0.5"]))
        clean = preprocess(grid)
        with pytest.raises(ValueError, match="already preprocessed"):
            preprocess(clean)

    def test_pixel_accounting(self):
        rows = full_pixel_rows(1, 0, 0, 3, lambda y, p: 0.5)  # constant: QA-dropped
        rows += full_pixel_rows(2, 1, 0, 3, lambda y, p: 0.01 * y + 0.001 * p)
        grid = parse_grid(csv_of(rows))
        clean = preprocess(grid)
        assert len(clean.pixel_ids) + len(clean.dropped) == len(grid.pixel_ids)

    def test_qa_parameter_validated(self):
        grid = parse_grid(csv_of(["1,0,0,0,1,0.5"]))
        with pytest.raises(ValueError):
            preprocess(grid, qa_consecutive_years=1)


class TestSeasonalAverages:
    def test_constant_year(self):
        rows = full_pixel_rows(1, 0, 0, 1, lambda y, p: 0.1)
        panel = seasonal_averages(preprocess(parse_grid(csv_of(rows))))
        np.testing.assert_allclose(panel.values[0, :, 0], 100.0)

    def test_first_season_mean(self):
        def value(year, period):
            if period <= 3:
                return 0.0
            if period <= 6:
                return 0.6
            return 0.1

        rows = full_pixel_rows(1, 0, 0, 1, value)
        panel = seasonal_averages(preprocess(parse_grid(csv_of(rows))))
        assert panel.values[0, 0, 0] == pytest.approx(300.0)

    def test_season_lengths(self):
        lengths = [sl.stop - sl.start for sl in SEASON_PERIOD_SLICES]
        assert lengths == [6, 6, 8, 4]
        # short-rain season averages exactly periods 21-24
        def value(year, period):
            return 0.1 * (period - 20) if period >= 21 else 0.9

        rows = full_pixel_rows(1, 0, 0, 1, value)
        panel = seasonal_averages(preprocess(parse_grid(csv_of(rows))))
        assert panel.values[0, 3, 0] == pytest.approx(1000 * 0.1 * (1 + 2 + 3 + 4) / 4)

    def test_conservation(self):
        rng = np.random.default_rng(8)
        rows = full_pixel_rows(1, 0, 0, 4, lambda y, p: round(rng.uniform(-0.2, 0.9), 6))
        clean = preprocess(parse_grid(csv_of(rows)))
        panel = seasonal_averages(clean)
        lengths = np.array([sl.stop - sl.start for sl in SEASON_PERIOD_SLICES])
        for t in range(4):
            total = (panel.values[0, :, t] * lengths).sum()
            assert total == pytest.approx(clean.values[0, t, :].sum(), rel=1e-9)

    def test_incomplete_pixel_excluded(self):
        rows = full_pixel_rows(1, 0, 0, 2, lambda y, p: 0.01 * y + 0.001 * p)
        rows += [r for r in full_pixel_rows(2, 1, 0, 2, lambda y, p: 0.02 * y + 0.001 * p)
                 if not r.startswith("2,1,0,1,7,")]
        panel = seasonal_averages(preprocess(parse_grid(csv_of(rows))))
        assert panel.pixel_ids.tolist() == [1]
        assert panel.excluded == [(2, REASON_MISSING)]

    def test_complete_values_finite(self):
        rows = full_pixel_rows(3, 2, 2, 3, lambda y, p: 0.001 * (y * 24 + p))
        panel = seasonal_averages(preprocess(parse_grid(csv_of(rows))))
        assert np.isfinite(panel.values).all()
        assert panel.values.shape == (1, 4, 3)


class TestPixelMeans:
    def test_mean_over_observed_values(self):
        rows = ["1,0,0,0,1,0.2", "1,0,0,0,2,0.4", "2,1,0,0,1,-0.5"]
        clean = preprocess(parse_grid(csv_of(rows)))
        means = pixel_means(clean)
        assert means[0] == pytest.approx(300.0)
        assert means[1] == 0.0
