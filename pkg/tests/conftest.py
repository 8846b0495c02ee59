import numpy as np
import pytest


def synthetic_grid_text(side=6, years=12, seed=0, trend_pixels=(), trend_slope=0.02,
                        constant=False, drop_cells=()):
    """Long-format observation CSV for a side x side pixel grid.

    Values stay within [-1, 1]: a smooth seasonal cycle plus noise, an
    optional linear trend for ``trend_pixels``, or an all-constant field.
    ``drop_cells`` removes specific (pixel_id, year, period) rows.
    """
    rng = np.random.default_rng(seed)
    lines = ["pixel_id,col,row,year,period,ndvi"]
    drop = set(drop_cells)
    for r in range(side):
        for c in range(side):
            pid = r * side + c
            base = 0.3 + 0.05 * ((c + r) % 3)
            for year in range(years):
                for period in range(1, 25):
                    if (pid, year, period) in drop:
                        continue
                    season = 0.15 * np.sin(2 * np.pi * period / 24.0)
                    noise = 0.03 * rng.standard_normal()
                    value = base + season + noise
                    if pid in trend_pixels:
                        value += trend_slope * year
                    if constant:
                        value = base
                    value = float(np.clip(value, -1.0, 1.0))
                    lines.append(f"{pid},{c},{r},{year},{period},{value:.6f}")
    return "\n".join(lines) + "\n"


@pytest.fixture
def grid_csv(tmp_path):
    def write(name="grid.csv", **kw):
        path = tmp_path / name
        path.write_text(synthetic_grid_text(**kw))
        return path

    return write
