import io

import numpy as np
import pytest

from trendscreen.procedures import DecisionTable, three_stage_directional_bh
from trendscreen.sim import (
    DecisionCounts,
    ScenarioError,
    SimScenario,
    build_covariance_factors,
    covariance_matrices,
    equicorrelation_root,
    evaluate_decisions,
    location_coordinates,
    read_scenarios,
    run_scenario,
    sample_replicate,
)


def scenario(**kw):
    base = dict(m=3, n_i=9, mu=2.0, pi0=0.9, rho1=0.2, rho2=0.1, theta=None,
                alpha=0.05, replicates=5, seed=77)
    base.update(kw)
    return SimScenario(**base)


class TestScenarioValidation:
    def test_defaults_resolve(self):
        sc = scenario()
        assert sc.side == 3
        assert sc.resolved_theta == 3.0
        assert sc.n_hypotheses == 108

    def test_non_square_n_i(self):
        with pytest.raises(ScenarioError, match="perfect square"):
            scenario(n_i=10)

    def test_rho1_bounds(self):
        with pytest.raises(ScenarioError, match="rho1"):
            scenario(rho1=-0.5)
        with pytest.raises(ScenarioError, match="rho1"):
            scenario(rho1=1.0)

    def test_rho2_bound_depends_on_m(self):
        scenario(m=11, rho2=-0.09)
        with pytest.raises(ScenarioError, match="rho2"):
            scenario(m=11, rho2=-0.11)

    def test_pi0_one_allowed(self):
        scenario(pi0=1.0)
        with pytest.raises(ScenarioError):
            scenario(pi0=0.0)


class TestCovarianceFactors:
    def test_identity_when_uncorrelated(self):
        np.testing.assert_allclose(equicorrelation_root(4, 0.0), np.eye(4))

    def test_equicorrelation_spectrum(self):
        # eigenvalues of (1-rho) I + rho 11' are 1 + (n-1) rho and 1 - rho
        for rho in (-0.3, 0.2, 0.7):
            g = (1 - rho) * np.eye(4) + rho * np.ones((4, 4))
            eig = np.sort(np.linalg.eigvalsh(g))
            assert eig[0] == pytest.approx(min(1 - rho, 1 + 3 * rho))
            assert eig[-1] == pytest.approx(max(1 - rho, 1 + 3 * rho))
        eig = np.linalg.eigvalsh((1 + 0.3) * np.eye(4) - 0.3 * np.ones((4, 4)))
        assert eig.min() == pytest.approx(0.1)

    def test_location_factor_unit_diagonal(self):
        for theta in (0.5, 3.0, 20.0):
            loc, _, _ = covariance_matrices(scenario(theta=theta))
            np.testing.assert_allclose(np.diag(loc), 1.0)

    def test_roots_reproduce_targets(self):
        sc = scenario(m=5, n_i=16, rho1=-0.3, rho2=0.5)
        g1, g2, g3 = covariance_matrices(sc)
        f = build_covariance_factors(sc)
        np.testing.assert_allclose(f.loc @ f.loc.T, g1, atol=1e-8)
        np.testing.assert_allclose(f.season @ f.season.T, g2, atol=1e-8)
        np.testing.assert_allclose(f.block @ f.block.T, g3, atol=1e-8)

    def test_location_grid_coordinates(self):
        xy = location_coordinates(9)
        assert xy.shape == (9, 2)
        assert xy.min() == 0 and xy.max() == 2
        assert len({tuple(r) for r in xy.tolist()}) == 9


class TestSampleReplicate:
    def test_deterministic_per_replicate(self):
        sc = scenario()
        f = build_covariance_factors(sc)
        p1, t1 = sample_replicate(sc, f, 3)
        p2, t2 = sample_replicate(sc, f, 3)
        np.testing.assert_array_equal(p1.p, p2.p)
        np.testing.assert_array_equal(p1.sign, p2.sign)
        np.testing.assert_array_equal(t1.z, t2.z)
        np.testing.assert_array_equal(t1.delta, t2.delta)
        p3, _ = sample_replicate(sc, f, 4)
        assert not np.array_equal(p1.p, p3.p)

    def test_panel_layout(self):
        sc = scenario(m=4, n_i=4)
        panel, truth = sample_replicate(sc, build_covariance_factors(sc), 0)
        assert panel.m == 4
        assert panel.n_locations == 16
        np.testing.assert_array_equal(panel.n_i, [4, 4, 4, 4])
        assert truth.z.shape == (16, 4)
        # delta only defined on planted signals
        assert (truth.delta[truth.z == 0] == 0).all()
        assert set(np.unique(truth.delta[truth.z == 1])) <= {-1, 1}

    def test_null_marginals_standard_normal(self):
        # pi0 = 1: every statistic is pure noise with unit variance
        sc = scenario(m=4, n_i=9, pi0=1.0, rho1=0.3, rho2=0.2, replicates=1)
        f = build_covariance_factors(sc)
        xs = []
        for r in range(300):
            panel, _ = sample_replicate(sc, f, r)
            xs.append(panel.p)
        p = np.concatenate(xs).ravel()
        # per-test type I rate at a 0.05 cutoff
        assert (p <= 0.05).mean() == pytest.approx(0.05, abs=0.005)

    def test_correlation_structure_smoke(self):
        # full 3 MC-SE pairwise check lives in the acceptance suite
        from scipy.special import ndtri

        sc = scenario(m=3, n_i=9, pi0=1.0, rho1=0.4, rho2=0.2, replicates=1)
        f = build_covariance_factors(sc)
        xs = []
        for r in range(2000):
            panel, _ = sample_replicate(sc, f, r)
            # reconstruct x from p and sign: |x| = Phi^-1(1 - p/2)
            x = panel.sign * ndtri(1.0 - panel.p / 2.0)
            xs.append(x.ravel())
        X = np.stack(xs)
        # same block, same location, seasons 0 vs 1 -> rho1
        r_season = np.corrcoef(X[:, 0], X[:, 1])[0, 1]
        assert r_season == pytest.approx(0.4, abs=0.06)
        # same location/season across blocks 0 and 1 -> rho2
        r_block = np.corrcoef(X[:, 0], X[:, 36])[0, 1]
        assert r_block == pytest.approx(0.2, abs=0.07)

    def test_signal_attenuation_with_block_correlation(self):
        # planted mean scales with the block-specific noise share
        sc = scenario(m=2, n_i=4, mu=5.0, pi0=0.5, rho2=0.75, replicates=1)
        f = build_covariance_factors(sc)
        from scipy.special import ndtri
        signal_vals, null_vals = [], []
        for r in range(800):
            panel, truth = sample_replicate(sc, f, r)
            x = panel.sign * ndtri(1.0 - panel.p / 2.0)
            signal_vals.extend((x * truth.delta)[truth.z == 1].tolist())
            null_vals.extend(x[truth.z == 0].tolist())
        assert np.mean(signal_vals) == pytest.approx(5.0 * np.sqrt(0.25), abs=0.1)
        assert np.mean(null_vals) == pytest.approx(0.0, abs=0.05)
        assert np.std(null_vals) == pytest.approx(1.0, abs=0.05)


class TestEvaluateDecisions:
    def table_for(self, panel, decisions):
        return DecisionTable(panel=panel, decisions=decisions, S=0, alpha=0.05,
                             procedure_tag="three_stage",
                             elementary_threshold=np.zeros(panel.m))

    def setup_method(self):
        sc = scenario(m=2, n_i=4, pi0=0.5)
        self.panel, self.truth = sample_replicate(
            sc, build_covariance_factors(sc), 0)

    def test_no_rejections(self):
        counts = evaluate_decisions(
            self.table_for(self.panel, np.zeros_like(self.panel.sign)), self.truth)
        assert counts == DecisionCounts(0, 0, 0, 0, self.truth.n_false_nulls)

    def test_type_one_error(self):
        dec = np.zeros_like(self.panel.sign)
        null_cells = np.argwhere(self.truth.z == 0)
        r, k = null_cells[0]
        dec[r, k] = 1
        counts = evaluate_decisions(self.table_for(self.panel, dec), self.truth)
        assert (counts.V, counts.U, counts.C, counts.R) == (1, 0, 0, 1)

    def test_type_three_error(self):
        dec = np.zeros_like(self.panel.sign)
        sig_cells = np.argwhere(self.truth.z == 1)
        r, k = sig_cells[0]
        dec[r, k] = -self.truth.delta[r, k]
        counts = evaluate_decisions(self.table_for(self.panel, dec), self.truth)
        assert (counts.V, counts.U, counts.C, counts.R) == (0, 1, 0, 1)

    def test_accounting_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            dec = rng.choice([-1, 0, 1], size=self.panel.sign.shape).astype(np.int8)
            counts = evaluate_decisions(self.table_for(self.panel, dec), self.truth)
            assert counts.V + counts.U + counts.C == counts.R

    def test_shape_mismatch(self):
        sc_other = scenario(m=2, n_i=9, pi0=0.5)
        other_panel, _ = sample_replicate(sc_other, build_covariance_factors(sc_other), 0)
        with pytest.raises(ValueError):
            evaluate_decisions(
                self.table_for(other_panel, np.zeros_like(other_panel.sign)),
                self.truth)


class TestRunScenario:
    def test_bitwise_deterministic(self):
        sc = scenario(replicates=8)
        a = run_scenario(sc)
        b = run_scenario(sc)
        for tag in a.stats:
            assert a.stats[tag] == b.stats[tag]
        assert a.mdfdr_bound_hat == b.mdfdr_bound_hat

    def test_all_null_scenario(self):
        sc = scenario(pi0=1.0, mu=0.0, replicates=30)
        res = run_scenario(sc, procedures=("three_stage",))
        st = res.stats["three_stage"]
        assert st.power_hat == 0.0  # F = 0 contributes 0 by convention
        assert st.mdfdr_hat <= 0.2
        assert res.mdfdr_bound_hat == pytest.approx(sc.alpha)

    def test_estimates_in_unit_interval(self):
        res = run_scenario(scenario(replicates=10))
        for st in res.stats.values():
            for v in (st.mdfdr_hat, st.power_hat):
                assert 0.0 <= v <= 1.0

    def test_three_stage_beats_by_here(self):
        sc = scenario(m=20, n_i=9, mu=3.0, pi0=0.9, rho1=0.0, rho2=0.0,
                      replicates=60)
        res = run_scenario(sc)
        assert res.stats["adaptive"].power_hat >= res.stats["three_stage"].power_hat
        assert res.stats["by_directional"].power_hat <= res.stats["three_stage"].power_hat

    def test_unknown_procedure(self):
        with pytest.raises(ScenarioError, match="unknown procedure"):
            run_scenario(scenario(), procedures=("bonferroni",))

    def test_single_replicate_has_zero_se(self):
        res = run_scenario(scenario(replicates=1), procedures=("three_stage",))
        assert res.stats["three_stage"].mc_se_mdfdr == 0.0


class TestReadScenarios:
    HEADER = "m,n_i,mu,pi0,rho1,rho2,theta,alpha,replicates,seed\n"

    def test_round_trip(self):
        text = self.HEADER + "3,9,2.0,0.9,0.2,0.1,,0.05,5,77\n"
        scenarios = read_scenarios(io.StringIO(text))
        assert scenarios == [scenario()]
        assert scenarios[0].resolved_theta == 3.0

    def test_explicit_theta(self):
        text = self.HEADER + "3,9,2.0,0.9,0.2,0.1,7.5,0.05,5,77\n"
        assert read_scenarios(io.StringIO(text))[0].resolved_theta == 7.5

    def test_error_names_row(self):
        text = self.HEADER + "3,9,2.0,0.9,0.2,0.1,,0.05,5,77\n" \
                             "3,9,2.0,0.9,-0.5,0.1,,0.05,5,77\n"
        with pytest.raises(ScenarioError, match="line 3"):
            read_scenarios(io.StringIO(text))

    def test_bad_header(self):
        with pytest.raises(ScenarioError, match="header"):
            read_scenarios(io.StringIO("a,b\n1,2\n"))

    def test_empty_file(self):
        with pytest.raises(ScenarioError, match="no rows"):
            read_scenarios(io.StringIO(self.HEADER))


class TestProcedureIntegration:
    def test_decisions_respect_thresholds_on_simulated_panel(self):
        sc = scenario(m=10, n_i=9, mu=5.0, pi0=0.8, replicates=1)
        panel, _ = sample_replicate(sc, build_covariance_factors(sc), 0)
        table = three_stage_directional_bh(panel, sc.alpha)
        if table.S > 0:
            rejected = np.argwhere(table.decisions != 0)
            assert rejected.size > 0
            block_of = panel.block_of
            for r, k in rejected:
                assert panel.p[r, k] <= table.elementary_threshold[block_of[r]]
