"""Monte Carlo harness for the directional error rate of the procedures.

Test statistics are drawn on an m-block layout, each block a square grid
of n_i locations with four seasons per location.  The noise is exactly
N(0, Sigma) with Sigma the Kronecker product of three correlation
matrices: exponential distance decay exp(-d/theta) across the locations
of a block, equicorrelation rho1 across the four seasons, and
equicorrelation rho2 across blocks.  Signals are planted independently
per cell (Bernoulli(1 - pi0), random +/- direction) on the
block-specific noise component: the block-shared component carries no
signal, so the planted mean is mu * sqrt(1 - rho2) while each statistic
keeps unit variance.  Holding the signal-to-idiosyncratic-noise ratio at
mu is what makes stronger between-block correlation genuinely harder:
the shared component inflates every block simultaneously and carries no
information about any single hypothesis.

Sampling is streamed per replicate from a generator seeded by
(scenario seed, replicate index), so results are independent of
evaluation order and identical under any parallel schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import ndtr

from . import kernels
from .procedures import (
    PROCEDURES,
    DecisionTable,
    TestPanel,
)

_TINY = np.finfo(np.float64).tiny

DEFAULT_PROCEDURE_TAGS = ("three_stage", "adaptive", "by_directional")

SCENARIO_COLUMNS = ["m", "n_i", "mu", "pi0", "rho1", "rho2", "theta",
                    "alpha", "replicates", "seed"]


class ScenarioError(ValueError):
    """Invalid simulation scenario parameters."""


@dataclass(frozen=True)
class SimScenario:
    """One simulation setting; ``theta=None`` defaults to the block side length."""

    m: int
    n_i: int
    mu: float
    pi0: float
    rho1: float
    rho2: float
    theta: float | None
    alpha: float
    replicates: int
    seed: int
    lam: float = 0.5

    def __post_init__(self):
        side = math.isqrt(self.n_i)
        if self.n_i < 1 or side * side != self.n_i:
            raise ScenarioError(f"n_i must be a perfect square, got {self.n_i}")
        if self.m < 1:
            raise ScenarioError(f"m must be >= 1, got {self.m}")
        if self.mu < 0:
            raise ScenarioError(f"mu is a magnitude and must be >= 0, got {self.mu}")
        if not 0 < self.pi0 <= 1:
            raise ScenarioError(f"pi0 must lie in (0, 1], got {self.pi0}")
        if not -1.0 / 3.0 < self.rho1 < 1:
            raise ScenarioError(f"rho1 must lie in (-1/3, 1), got {self.rho1}")
        lo = -1.0 / (self.m - 1) if self.m > 1 else -1.0
        if not lo < self.rho2 < 1:
            raise ScenarioError(
                f"rho2 must lie in ({lo:.6g}, 1) for m={self.m}, got {self.rho2}"
            )
        if self.theta is not None and self.theta <= 0:
            raise ScenarioError(f"theta must be positive, got {self.theta}")
        if not 0 < self.alpha < 1:
            raise ScenarioError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.replicates < 1:
            raise ScenarioError(f"replicates must be >= 1, got {self.replicates}")
        if not 0 < self.lam < 1:
            raise ScenarioError(f"lambda must lie in (0, 1), got {self.lam}")

    @property
    def side(self) -> int:
        return math.isqrt(self.n_i)

    @property
    def resolved_theta(self) -> float:
        return float(self.theta) if self.theta is not None else float(self.side)

    @property
    def n_hypotheses(self) -> int:
        return 4 * self.m * self.n_i


@dataclass
class TruthPanel:
    """Planted-signal indicators and directions, in panel row layout.

    ``delta`` is meaningful exactly where ``z == 1`` and held at 0
    elsewhere.
    """

    z: np.ndarray  # (L, 4) uint8
    delta: np.ndarray  # (L, 4) int8, 0 where z == 0

    @property
    def n_false_nulls(self) -> int:
        return int(self.z.sum())


@dataclass(frozen=True)
class DecisionCounts:
    """Error bookkeeping for one decision table against the truth."""

    V: int  # rejections of true nulls (Type I)
    U: int  # sign errors on false nulls (Type III)
    R: int  # total rejections
    C: int  # correctly signed rejections of false nulls
    F: int  # total false nulls


@dataclass(frozen=True)
class ProcedureStats:
    mdfdr_hat: float
    power_hat: float
    mc_se_mdfdr: float
    mc_se_power: float


@dataclass
class SimResult:
    scenario: SimScenario
    stats: dict  # procedure tag -> ProcedureStats
    mdfdr_bound_hat: float
    mc_se_bound: float
    replicates_run: int


def location_coordinates(n_i: int) -> np.ndarray:
    """(n_i, 2) coordinates of a block's locations on its side x side grid."""
    side = math.isqrt(n_i)
    g = np.arange(side)
    cols, rows = np.meshgrid(g, g, indexing="xy")
    return np.column_stack([cols.ravel(), rows.ravel()]).astype(np.float64)


def equicorrelation_root(n: int, rho: float) -> np.ndarray:
    """Symmetric square root of (1 - rho) I + rho 11' in closed form.

    The matrix has eigenvalues 1 + (n-1) rho (once) and 1 - rho; its root
    is a I + b 11' with a = sqrt(1 - rho), b = (sqrt(1 + (n-1) rho) - a)/n.
    """
    if n > 1 and not -1.0 / (n - 1) < rho < 1:
        raise ScenarioError(f"equicorrelation {rho} not positive definite for n={n}")
    a = math.sqrt(1.0 - rho)
    b = (math.sqrt(1.0 + (n - 1) * rho) - a) / n
    return a * np.eye(n) + b * np.ones((n, n))


def covariance_matrices(sc: SimScenario):
    """The three correlation factors (locations, seasons, blocks)."""
    xy = location_coordinates(sc.n_i)
    d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
    loc = np.exp(-d / sc.resolved_theta)
    season = (1.0 - sc.rho1) * np.eye(4) + sc.rho1 * np.ones((4, 4))
    block = (1.0 - sc.rho2) * np.eye(sc.m) + sc.rho2 * np.ones((sc.m, sc.m))
    return loc, season, block


@dataclass(frozen=True)
class CovarianceFactors:
    loc: np.ndarray  # (n_i, n_i) lower Cholesky of the distance-decay factor
    season: np.ndarray  # (4, 4) symmetric root
    block: np.ndarray  # (m, m) symmetric root


def build_covariance_factors(sc: SimScenario) -> CovarianceFactors:
    """Square-root factors of the three correlation matrices."""
    loc_cov, _, _ = covariance_matrices(sc)
    try:
        loc_root = kernels.cholesky_lower(loc_cov)
    except np.linalg.LinAlgError as exc:  # exp(-d/theta) is strictly PD in exact math
        raise ScenarioError(f"location covariance not positive definite: {exc}") from exc
    return CovarianceFactors(
        loc=loc_root,
        season=equicorrelation_root(4, sc.rho1),
        block=equicorrelation_root(sc.m, sc.rho2),
    )


def _panel_skeleton(sc: SimScenario):
    block_ids = np.arange(sc.m, dtype=np.int64)
    block_starts = np.arange(sc.m + 1, dtype=np.int64) * sc.n_i
    pixel_ids = np.tile(np.arange(sc.n_i, dtype=np.int64), sc.m)
    return block_ids, block_starts, pixel_ids


def sample_replicate(sc: SimScenario, factors: CovarianceFactors,
                     replicate_index: int):
    """Draw one replicate; deterministic in (sc.seed, replicate_index).

    Draw order is fixed: signal indicators, signal directions, then the
    noise cube.  Returns ``(TestPanel, TruthPanel)`` in block-major row
    layout.
    """
    rng = np.random.default_rng([sc.seed, replicate_index])
    shape = (sc.n_i, 4, sc.m)  # (location, season, block)
    z = (rng.random(shape) < (1.0 - sc.pi0)).astype(np.uint8)
    delta = np.where(rng.random(shape) < 0.5, 1, -1).astype(np.int8)
    eps = rng.standard_normal(shape)
    noise = kernels.kron_transform(eps, factors.loc, factors.season, factors.block)
    signal_scale = sc.mu * math.sqrt(1.0 - sc.rho2)
    x = signal_scale * (delta * z) + noise
    p = np.maximum(2.0 * ndtr(-np.abs(x)), _TINY)
    sign = np.sign(x).astype(np.int8)

    # (location, season, block) -> block-major rows (block, location, season)
    def to_rows(cube):
        return np.ascontiguousarray(cube.transpose(2, 0, 1)).reshape(sc.m * sc.n_i, 4)

    block_ids, block_starts, pixel_ids = _panel_skeleton(sc)
    panel = TestPanel(block_ids, block_starts, pixel_ids, to_rows(p), to_rows(sign))
    truth = TruthPanel(z=to_rows(z), delta=to_rows(np.where(z == 1, delta, 0)))
    return panel, truth


def evaluate_decisions(table: DecisionTable, truth: TruthPanel) -> DecisionCounts:
    """Count Type I / Type III errors and correct detections.

    Identity V + U + C = R holds by construction.
    """
    dec = table.decisions
    if dec.shape != truth.z.shape:
        raise ValueError("decision table and truth panel shapes differ")
    rejected = dec != 0
    is_null = truth.z == 0
    v = int((rejected & is_null).sum())
    u = int((rejected & ~is_null & (dec != truth.delta)).sum())
    c = int((rejected & ~is_null & (dec == truth.delta)).sum())
    return DecisionCounts(V=v, U=u, R=int(rejected.sum()), C=c,
                          F=truth.n_false_nulls)


def _realized_bound(sc: SimScenario, truth: TruthPanel) -> float:
    """alpha/m * sum_i (1 + pi_i0)/2 with the realized per-block null shares.

    When blocks are independent, the three-stage procedure's expected
    directional error rate lies below this cap (which itself is <= alpha).
    """
    per_block_false = truth.z.reshape(sc.m, sc.n_i * 4).sum(axis=1)
    pi_i0 = 1.0 - per_block_false / (4.0 * sc.n_i)
    return float(sc.alpha / sc.m * ((1.0 + pi_i0) / 2.0).sum())


def _decide(tag: str, panel: TestPanel, sc: SimScenario) -> DecisionTable:
    if tag == "adaptive":
        return PROCEDURES[tag](panel, sc.alpha, sc.lam)
    return PROCEDURES[tag](panel, sc.alpha)


def run_scenario(sc: SimScenario,
                 procedures=DEFAULT_PROCEDURE_TAGS) -> SimResult:
    """Estimate mdFDR and average power over the scenario's replicates.

    Per replicate and procedure the mdFDR term is (V + U) / max(R, 1) and
    the power term C / max(F, 1); estimates are replicate means with
    Monte Carlo standard errors (sample sd / sqrt(replicates), 0 for a
    single replicate).
    """
    procedures = tuple(procedures)
    unknown = [t for t in procedures if t not in PROCEDURES]
    if unknown:
        raise ScenarioError(f"unknown procedure tag(s): {', '.join(unknown)}")
    factors = build_covariance_factors(sc)
    terms = {tag: ([], []) for tag in procedures}  # tag -> (mdfdr, power)
    bounds = []
    for r in range(sc.replicates):
        panel, truth = sample_replicate(sc, factors, r)
        bounds.append(_realized_bound(sc, truth))
        for tag in procedures:
            counts = evaluate_decisions(_decide(tag, panel, sc), truth)
            terms[tag][0].append((counts.V + counts.U) / max(counts.R, 1))
            terms[tag][1].append(counts.C / max(counts.F, 1))

    def _mean_se(xs):
        arr = np.asarray(xs)
        se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        return float(arr.mean()), se

    stats = {}
    for tag in procedures:
        mdfdr, se_mdfdr = _mean_se(terms[tag][0])
        power, se_power = _mean_se(terms[tag][1])
        stats[tag] = ProcedureStats(mdfdr, power, se_mdfdr, se_power)
    bound, se_bound = _mean_se(bounds)
    return SimResult(
        scenario=sc,
        stats=stats,
        mdfdr_bound_hat=bound,
        mc_se_bound=se_bound,
        replicates_run=sc.replicates,
    )


def read_scenarios(path) -> list[SimScenario]:
    """Load scenarios from CSV with columns m,n_i,...,seed.

    An empty ``theta`` field means "use the block side length".  Raises
    :class:`ScenarioError` naming the offending row on bad values.
    """
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except Exception as exc:
        raise ScenarioError(f"could not read scenario CSV: {exc}") from exc
    if list(frame.columns) != SCENARIO_COLUMNS:
        raise ScenarioError(
            f"expected header {','.join(SCENARIO_COLUMNS)}, got {','.join(frame.columns)}"
        )
    scenarios = []
    for i, rec in enumerate(frame.to_dict("records")):
        row = i + 2  # header + one-based
        try:
            theta_raw = rec["theta"]
            if theta_raw is None or pd.isna(theta_raw) or str(theta_raw).strip() == "":
                theta = None
            else:
                theta = float(theta_raw)
            scenarios.append(SimScenario(
                m=int(rec["m"]),
                n_i=int(rec["n_i"]),
                mu=float(rec["mu"]),
                pi0=float(rec["pi0"]),
                rho1=float(rec["rho1"]),
                rho2=float(rec["rho2"]),
                theta=theta,
                alpha=float(rec["alpha"]),
                replicates=int(rec["replicates"]),
                seed=int(rec["seed"]),
            ))
        except ScenarioError as exc:
            raise ScenarioError(f"scenario row at line {row}: {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"scenario row at line {row}: bad value ({exc})") from exc
    if not scenarios:
        raise ScenarioError("scenario file contains no rows")
    return scenarios
