"""Directional multiple-testing procedures over block-grouped p-values.

Hypotheses are organised as (block, location, season) with four seasons
per location.  Bonferroni combination gives one p-value per location
(4 min over seasons, capped at 1) and one per block (n_i min over
locations, capped at 1); the capping never changes a decision because
every rejection threshold is below 1.

Three decision procedures are provided:

* a three-stage step-up procedure: Benjamini-Hochberg (1995) across the
  block p-values, then fixed thresholds S*alpha/(m n_i) within rejected
  blocks and S*alpha/(4 m n_i) within rejected locations, each rejected
  season labelled with the sign of its test statistic;
* an adaptive variant that first rescales every elementary p-value by
  (1 + pi0_hat)/2, with pi0_hat the block-level null-proportion estimate
  of Storey, Taylor and Siegmund (2004);
* a flat Benjamini-Yekutieli (2001) baseline over all elementary
  p-values, valid under arbitrary dependence, with the same directional
  labelling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SEASONS = 4

DECISION_NONE = 0
DECISION_LABELS = {0: "none", 1: "up", -1: "down"}


@dataclass
class TestPanel:
    """Elementary p-values and statistic signs, grouped by block.

    Rows (locations) are stored contiguously by block: block ``b`` owns
    rows ``block_starts[b]:block_starts[b+1]``.  ``p`` and ``sign`` have
    one column per season.
    """

    block_ids: np.ndarray  # (m,) identifiers, unique
    block_starts: np.ndarray  # (m+1,) row offsets, strictly increasing
    pixel_ids: np.ndarray  # (L,) location identifiers within the panel
    p: np.ndarray  # (L, SEASONS) in (0, 1]
    sign: np.ndarray  # (L, SEASONS) in {-1, 0, +1}

    def __post_init__(self):
        self.block_ids = np.asarray(self.block_ids, dtype=np.int64)
        self.block_starts = np.asarray(self.block_starts, dtype=np.int64)
        self.pixel_ids = np.asarray(self.pixel_ids, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=np.float64)
        self.sign = np.asarray(self.sign, dtype=np.int8)
        m = self.block_ids.shape[0]
        if self.block_starts.shape != (m + 1,):
            raise ValueError("block_starts must have length m + 1")
        if m and (np.diff(self.block_starts) < 1).any():
            raise ValueError("every block must contain at least one location")
        L = int(self.block_starts[-1]) if m else 0
        if self.p.shape != (L, SEASONS) or self.sign.shape != (L, SEASONS):
            raise ValueError("p and sign must have shape (locations, 4)")
        if self.pixel_ids.shape != (L,):
            raise ValueError("pixel_ids must have one entry per location")
        if L and ((self.p <= 0).any() or (self.p > 1).any()):
            raise ValueError("p-values must lie in (0, 1]")

    @property
    def m(self) -> int:
        return self.block_ids.shape[0]

    @property
    def n_locations(self) -> int:
        return int(self.block_starts[-1]) if self.m else 0

    @property
    def n_i(self) -> np.ndarray:
        """Locations per block."""
        return np.diff(self.block_starts)

    @property
    def block_of(self) -> np.ndarray:
        """Block position (0..m-1) of each location row."""
        return np.repeat(np.arange(self.m), self.n_i)


@dataclass
class CombinedPValues:
    """Bonferroni-combined p-values: one per location, one per block."""

    location_p: np.ndarray  # (L,)
    block_p: np.ndarray  # (m,)


@dataclass
class DecisionTable:
    """Per-(block, location, season) trend decisions and the thresholds used.

    ``decisions`` holds 0 (none), +1 (up) or -1 (down).  ``S`` is the
    step-up rejection count of the first stage (for the flat baseline,
    the step-up count over all elementary hypotheses).
    ``elementary_threshold`` is the season-level rejection threshold that
    applied within each block.
    """

    panel: TestPanel
    decisions: np.ndarray  # (L, SEASONS) int8
    S: int
    alpha: float
    procedure_tag: str
    elementary_threshold: np.ndarray  # (m,)
    pi0_hat: np.ndarray | None = field(default=None)

    @property
    def n_rejections(self) -> int:
        return int((self.decisions != DECISION_NONE).sum())


def bh_stepup(pvalues, alpha: float):
    """Benjamini-Hochberg step-up at level ``alpha``.

    Returns ``(S, rejected)`` where S is the largest index k with
    P_(k) <= k alpha / M (0 when none) and ``rejected`` holds the indices
    of the p-values at or below P_(S).  Ties at the threshold are all
    rejected; the step-up definition guarantees exactly S of them.
    """
    p = np.asarray(pvalues, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("expected a one-dimensional p-value array")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    M = p.shape[0]
    if M == 0:
        return 0, np.empty(0, dtype=np.int64)
    if (p <= 0).any() or (p > 1).any():
        raise ValueError("p-values must lie in (0, 1]")
    order = np.sort(p)
    passing = np.flatnonzero(order <= np.arange(1, M + 1) * (alpha / M))
    if passing.size == 0:
        return 0, np.empty(0, dtype=np.int64)
    S = int(passing[-1]) + 1
    return S, np.flatnonzero(p <= order[S - 1])


def combine_location(season_ps) -> float:
    """Bonferroni combination over the four seasons: min(4 min_k p_k, 1)."""
    p = np.asarray(season_ps, dtype=np.float64)
    if p.shape != (SEASONS,):
        raise ValueError(f"expected exactly {SEASONS} season p-values")
    return min(SEASONS * float(p.min()), 1.0)


def combine_subregion(location_ps) -> float:
    """Bonferroni combination over a block's locations: min(n_i min_j p_j, 1)."""
    p = np.asarray(location_ps, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] == 0:
        raise ValueError("expected a nonempty vector of location p-values")
    return min(p.shape[0] * float(p.min()), 1.0)


def combine_panel(p: np.ndarray, block_starts: np.ndarray) -> CombinedPValues:
    """Vectorised location- and block-level combination for a whole panel."""
    location_p = np.minimum(SEASONS * p.min(axis=1), 1.0)
    n_i = np.diff(block_starts)
    if n_i.size:
        block_min = np.minimum.reduceat(location_p, block_starts[:-1])
        block_p = np.minimum(n_i * block_min, 1.0)
    else:
        block_p = np.empty(0)
    return CombinedPValues(location_p=location_p, block_p=block_p)


def _three_stage(panel: TestPanel, p: np.ndarray, alpha: float, tag: str,
                 pi0_hat=None) -> DecisionTable:
    """Shared engine for the three-stage procedures; ``p`` may be adjusted."""
    m = panel.m
    combined = combine_panel(p, panel.block_starts)
    S, rejected_blocks = bh_stepup(combined.block_p, alpha) if m else (0, np.empty(0, int))
    decisions = np.zeros_like(panel.sign)
    n_i = panel.n_i
    thresholds = np.zeros(m)
    if S > 0:
        thresholds = S * alpha / (SEASONS * m * n_i.astype(np.float64))
        block_rej = np.zeros(m, dtype=bool)
        block_rej[rejected_blocks] = True
        block_of = panel.block_of
        stage2 = S * alpha / (m * n_i.astype(np.float64))
        loc_rej = block_rej[block_of] & (combined.location_p <= stage2[block_of])
        elem = loc_rej[:, None] & (p <= thresholds[block_of][:, None])
        decisions = np.where(elem, panel.sign, np.int8(DECISION_NONE))
    return DecisionTable(
        panel=panel,
        decisions=decisions.astype(np.int8),
        S=S,
        alpha=alpha,
        procedure_tag=tag,
        elementary_threshold=thresholds,
        pi0_hat=pi0_hat,
    )


def three_stage_directional_bh(panel: TestPanel, alpha: float) -> DecisionTable:
    """Three-stage directional step-up procedure at level ``alpha``.

    Stage 1 applies Benjamini-Hochberg to the block p-values (S = number
    of rejected blocks).  Stage 2 rejects location (i, j) in a rejected
    block when P_ij <= S alpha / (m n_i).  Stage 3 rejects season k of a
    rejected location when P_ijk <= S alpha / (4 m n_i) and labels it
    with the sign of its statistic.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return _three_stage(panel, panel.p, alpha, "three_stage")


def storey_pi0(block_ps, lam: float) -> float:
    """Null-proportion estimate of Storey et al. (2004) for one block.

    min{ (#{p > lambda} + 1) / (N (1 - lambda)), 1 } over the block's N
    elementary p-values; the +1 keeps the estimate positive.
    """
    if not 0 < lam < 1:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    p = np.asarray(block_ps, dtype=np.float64)
    if p.size == 0:
        raise ValueError("expected a nonempty vector of p-values")
    exceed = int((p > lam).sum())
    return min((exceed + 1) / (p.size * (1.0 - lam)), 1.0)


def adaptive_three_stage(panel: TestPanel, alpha: float, lam: float = 0.5) -> DecisionTable:
    """Adaptive three-stage procedure: p-values rescaled by (1 + pi0_hat)/2.

    pi0_hat is estimated per block from its 4 n_i elementary p-values and
    every elementary p-value of the block is replaced by
    min((1 + pi0_hat)/2 p, 1) before all combination and staging; the
    three-stage procedure then runs unchanged on the adjusted values.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not 0 < lam < 1:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    if panel.m == 0:
        return _three_stage(panel, panel.p, alpha, "adaptive", pi0_hat=np.empty(0))
    exceed_per_loc = (panel.p > lam).sum(axis=1)
    exceed = np.add.reduceat(exceed_per_loc, panel.block_starts[:-1])
    n_elem = SEASONS * panel.n_i
    pi0_hat = np.minimum((exceed + 1) / (n_elem * (1.0 - lam)), 1.0)
    multiplier = (1.0 + pi0_hat) / 2.0
    adjusted = np.minimum(multiplier[panel.block_of][:, None] * panel.p, 1.0)
    return _three_stage(panel, adjusted, alpha, "adaptive", pi0_hat=pi0_hat)


def by_directional(panel: TestPanel, alpha: float) -> DecisionTable:
    """Directional Benjamini-Yekutieli baseline over all elementary p-values.

    Step-up over the M = sum_i 4 n_i elementary p-values at level
    alpha / H_M (H_M the M-th harmonic number), each rejection labelled
    with the sign of its statistic.  ``S`` records the step-up count and
    the elementary threshold is the flat step-up cutoff S (alpha/H_M) / M.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    m = panel.m
    flat = panel.p.ravel()
    M = flat.shape[0]
    if M == 0:
        return DecisionTable(panel, np.zeros_like(panel.sign), 0, alpha,
                             "by_directional", np.zeros(m))
    harmonic = float((1.0 / np.arange(1, M + 1)).sum())
    S, rejected = bh_stepup(flat, alpha / harmonic)
    decisions = np.zeros(M, dtype=np.int8)
    if S > 0:
        decisions[rejected] = panel.sign.ravel()[rejected]
    cutoff = S * (alpha / harmonic) / M
    return DecisionTable(
        panel=panel,
        decisions=decisions.reshape(panel.sign.shape),
        S=S,
        alpha=alpha,
        procedure_tag="by_directional",
        elementary_threshold=np.full(m, cutoff),
        pi0_hat=None,
    )


PROCEDURES = {
    "three_stage": three_stage_directional_bh,
    "adaptive": adaptive_three_stage,
    "by_directional": by_directional,
}
