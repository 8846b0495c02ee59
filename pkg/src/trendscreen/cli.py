"""Batch command-line front end: ``analyze``, ``variogram``, ``simulate``.

File-in/file-out and deterministic: identical inputs and flags produce
byte-identical outputs.  Every output file opens with a comment block
echoing the fully resolved configuration.  Exit codes: 0 success,
1 input error, 2 numerical/degeneracy error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import ingest, sim, spatial, trend
from .kernels import active_backend
from .procedures import DECISION_LABELS, PROCEDURES, TestPanel
from .sim import ScenarioError
from .spatial import NoSpatialVarianceError

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERIC = 2

_PROCEDURE_ALIASES = {"three_stage": "three_stage", "adaptive": "adaptive",
                      "by": "by_directional", "by_directional": "by_directional"}


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _config_header(tool: str, pairs: dict) -> list[str]:
    lines = [f"# trendscreen {tool}"]
    lines += [f"# {key}={_fmt(pairs[key])}" for key in sorted(pairs)]
    return lines


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _decision_lines(table, config):
    yield from _config_header("analyze", config)
    yield "block_id,pixel_id,season,p_elementary,decision,S,threshold"
    panel = table.panel
    block_of = panel.block_of
    for row in range(panel.n_locations):
        b = block_of[row]
        bid = panel.block_ids[b]
        thr = table.elementary_threshold[b]
        for season in range(4):
            yield (
                f"{bid},{panel.pixel_ids[row]},{season + 1},"
                f"{_fmt(panel.p[row, season])},"
                f"{DECISION_LABELS[int(table.decisions[row, season])]},"
                f"{table.S},{_fmt(thr)}"
            )


def _summary_lines(config, counts, part, table):
    yield from _config_header("analyze", config)
    yield "section,key,value"
    for key, value in counts:
        yield f"counts,{key},{value}"
    yield f"procedure,S,{table.S}"
    yield f"procedure,m,{part.m}"
    up = (table.decisions == 1).sum(axis=0)
    down = (table.decisions == -1).sum(axis=0)
    for k, label in enumerate(ingest.SEASON_LABELS):
        yield f"season_up,{label},{int(up[k])}"
        yield f"season_down,{label},{int(down[k])}"
    for b in range(part.m):
        line = (f"block,{b},{part.block_keys[b, 0]},{part.block_keys[b, 1]},"
                f"{int(part.n_i[b])}")
        if table.pi0_hat is not None:
            line += f",{_fmt(table.pi0_hat[b])}"
        yield line


def cmd_analyze(args) -> int:
    procedure_tag = _PROCEDURE_ALIASES[args.procedure]
    config = {
        "input": args.input,
        "alpha": args.alpha,
        "block_size": args.block_size,
        "procedure": args.procedure,
        "lambda": args.lam,
        "trend_max_lag": args.trend_max_lag,
        "qa_consecutive_years": args.qa_consecutive_years,
        "backend": active_backend(),
    }
    grid = ingest.parse_grid(args.input)
    clean = ingest.preprocess(grid, args.qa_consecutive_years)
    panel = ingest.seasonal_averages(clean)

    n_kept = panel.pixel_ids.shape[0]
    series = panel.values.reshape(n_kept * 4, panel.years) if n_kept else \
        np.empty((0, max(panel.years, 3)))
    stat, p, _, _, status = trend.trend_statistics(series, args.trend_max_lag)
    stat = stat.reshape(n_kept, 4)
    p = p.reshape(n_kept, 4)
    status = status.reshape(n_kept, 4)

    degenerate = (status == 2).any(axis=1)
    testable = ~degenerate
    exclusions = list(clean.dropped) + list(panel.excluded) + [
        (int(pid), ingest.REASON_DEGENERATE) for pid in panel.pixel_ids[degenerate]
    ]

    part = spatial.partition(
        panel.pixel_ids[testable], panel.cols[testable], panel.rows[testable],
        args.block_size,
    )
    # partition rows are sorted by (block, pixel_id); panel rows by pixel_id
    kept_ids = panel.pixel_ids[testable]
    perm = np.searchsorted(kept_ids, part.pixel_ids)
    test_panel = TestPanel(
        block_ids=np.arange(part.m),
        block_starts=part.starts,
        pixel_ids=part.pixel_ids,
        p=p[testable][perm],
        sign=np.sign(stat[testable][perm]).astype(np.int8),
    )
    if part.m == 0:
        print("warning: no testable pixels after preprocessing", file=sys.stderr)
    table = PROCEDURES[procedure_tag](test_panel, args.alpha) \
        if procedure_tag != "adaptive" \
        else PROCEDURES[procedure_tag](test_panel, args.alpha, args.lam)

    counts = [
        ("pixels_parsed", grid.pixel_ids.shape[0]),
        ("pixels_dropped_qa", len(clean.dropped)),
        ("pixels_excluded_missing", len(panel.excluded)),
        ("pixels_excluded_degenerate", int(degenerate.sum())),
        ("pixels_tested", int(part.pixel_ids.shape[0])),
    ]
    _write_lines(args.decisions, _decision_lines(table, config))
    _write_lines(args.summary, _summary_lines(config, counts, part, table))
    if args.dropped_report:
        lines = _config_header("analyze", config) + ["pixel_id,reason"]
        lines += [f"{pid},{reason}" for pid, reason in exclusions]
        _write_lines(args.dropped_report, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# variogram
# ---------------------------------------------------------------------------


def cmd_variogram(args) -> int:
    config = {
        "input": args.input,
        "max_lag": args.max_lag,
        "bin_width": args.bin_width,
        "sill_fraction": args.sill_fraction,
        "qa_consecutive_years": args.qa_consecutive_years,
        "backend": active_backend(),
    }
    grid = ingest.parse_grid(args.input)
    clean = ingest.preprocess(grid, args.qa_consecutive_years)
    field = ingest.pixel_means(clean)
    coords = np.column_stack([clean.cols, clean.rows]).astype(np.float64)
    vgram = spatial.empirical_semivariogram(coords, field, args.max_lag, args.bin_width)
    est = spatial.estimate_range(vgram, args.sill_fraction)

    lines = _config_header("variogram", config)
    lines.append("lag,gamma_hat,pair_count")
    for i in range(vgram.n_bins):
        lines.append(
            f"{_fmt(vgram.lags[i])},{_fmt(vgram.gamma[i])},{int(vgram.pair_counts[i])}"
        )
    lines.append(f"range,{_fmt(est.value)}")
    if not est.reached:
        lines.append("# warning: sill fraction not reached within max_lag")
        print("warning: sill fraction not reached within max_lag", file=sys.stderr)
    _write_lines(args.output, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _parse_procedures(spec: str):
    tags = []
    for token in spec.split(","):
        token = token.strip()
        if token not in _PROCEDURE_ALIASES:
            raise ScenarioError(
                f"unknown procedure '{token}' (choose from three_stage, adaptive, by)"
            )
        tag = _PROCEDURE_ALIASES[token]
        if tag not in tags:
            tags.append(tag)
    if not tags:
        raise ScenarioError("no procedures requested")
    return tuple(tags)


def cmd_simulate(args) -> int:
    tags = _parse_procedures(args.procedures)
    scenarios = sim.read_scenarios(args.scenarios)
    config = {
        "scenarios": args.scenarios,
        "procedures": ",".join(tags),
        "backend": active_backend(),
    }
    lines = _config_header("simulate", config)
    lines.append(
        "scenario,procedure,m,n_i,mu,pi0,rho1,rho2,theta,alpha,replicates,seed,"
        "mdfdr,mdfdr_se,power,power_se,mdfdr_bound,mdfdr_bound_se"
    )
    for index, sc in enumerate(scenarios, start=1):
        result = sim.run_scenario(sc, tags)
        for tag in tags:
            st = result.stats[tag]
            lines.append(
                f"{index},{tag},{sc.m},{sc.n_i},{_fmt(sc.mu)},{_fmt(sc.pi0)},"
                f"{_fmt(sc.rho1)},{_fmt(sc.rho2)},{_fmt(sc.resolved_theta)},"
                f"{_fmt(sc.alpha)},{sc.replicates},{sc.seed},"
                f"{_fmt(st.mdfdr_hat)},{_fmt(st.mc_se_mdfdr)},"
                f"{_fmt(st.power_hat)},{_fmt(st.mc_se_power)},"
                f"{_fmt(result.mdfdr_bound_hat)},{_fmt(result.mc_se_bound)}"
            )
    _write_lines(args.output, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trendscreen",
        description="Directional FDR screening of monotone trends in gridded "
                    "seasonal series",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="run the full detection pipeline")
    pa.add_argument("--input", required=True, help="observation CSV")
    pa.add_argument("--decisions", required=True, help="output decision CSV")
    pa.add_argument("--summary", required=True, help="output summary file")
    pa.add_argument("--dropped-report", default=None,
                    help="optional CSV listing dropped/excluded pixels")
    pa.add_argument("--alpha", type=float, default=0.05)
    pa.add_argument("--block-size", type=int, default=20)
    pa.add_argument("--procedure", choices=["three_stage", "adaptive", "by"],
                    default="three_stage")
    pa.add_argument("--lambda", dest="lam", type=float, default=0.5,
                    help="null-proportion tuning parameter (adaptive procedure)")
    pa.add_argument("--trend-max-lag", type=int, default=trend.DEFAULT_MAX_LAG)
    pa.add_argument("--qa-consecutive-years", type=int, default=2)
    pa.set_defaults(func=cmd_analyze)

    pv = sub.add_parser("variogram", help="empirical semivariogram and range")
    pv.add_argument("--input", required=True, help="observation CSV")
    pv.add_argument("--output", required=True, help="output variogram CSV")
    pv.add_argument("--max-lag", type=float, default=25.0)
    pv.add_argument("--bin-width", type=float, default=1.0)
    pv.add_argument("--sill-fraction", type=float, default=0.95)
    pv.add_argument("--qa-consecutive-years", type=int, default=2)
    pv.set_defaults(func=cmd_variogram)

    ps = sub.add_parser("simulate", help="Monte Carlo error-rate estimation")
    ps.add_argument("--scenarios", required=True, help="scenario CSV")
    ps.add_argument("--output", required=True, help="output results CSV")
    ps.add_argument("--procedures", default="three_stage,adaptive,by",
                    help="comma-separated procedure list")
    ps.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoSpatialVarianceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (trend.DegenerateSeriesError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ingest.GridFormatError, ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
