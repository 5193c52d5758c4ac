import csv
import json

import numpy as np
import pytest
from scipy import stats

from spillover.graph import WeightedGraph, watts_strogatz
from spillover.simulate import (
    PAPER_NETWORKS,
    PAPER_R_GRID,
    PAPER_REPS,
    NetworkSpec,
    OutcomeModelConfig,
    SweepResult,
    bias_reduction,
    outcomes,
    run_sweep,
    true_ate,
    true_ate_monte_carlo,
)

SMALL = (NetworkSpec("low", 1500, 4, 0.1), NetworkSpec("high", 1500, 10, 0.1))


@pytest.fixture(scope="module")
def small_sweep():
    return run_sweep(SMALL, r_grid=np.linspace(0, 1, 5), reps=6, seed=3)


class TestOutcomes:
    def test_no_spillover_no_noise(self):
        g = watts_strogatz(200, 4, 0.1, seed=0)
        treated = np.arange(200) % 2 == 0
        y = outcomes(g, treated, OutcomeModelConfig(tau=1.5, delta=0.0, noise_sd=0.0))
        assert np.array_equal(y, 1.5 * treated)
        assert y[treated].mean() - y[~treated].mean() == 1.5

    def test_all_treated_expectation(self):
        g = watts_strogatz(2000, 10, 0.3, seed=1)
        cfg = OutcomeModelConfig(tau=0.0, delta=0.2, s_prob=0.3, noise_sd=0.0)
        draws = np.mean([outcomes(g, np.ones(g.n, bool), cfg, np.random.default_rng(s)) for s in range(200)], axis=0)
        assert np.allclose(draws, 0.2 * g.degrees * 0.3, atol=0.12)

    def test_star_center(self):
        d = 7
        g = WeightedGraph.from_edges([0] * d, range(1, d + 1))
        treated = np.arange(d + 1) > 0
        y = outcomes(g, treated, OutcomeModelConfig(delta=0.2, noise_sd=0.0), spill_flags=np.ones(d + 1, bool))
        assert y[0] == pytest.approx(0.2 * d)
        assert np.allclose(y[1:], 1.0)

    def test_weights_ignored(self):
        g = WeightedGraph.from_edges([0], [1], [5.0])
        y = outcomes(g, np.array([True, False]), OutcomeModelConfig(noise_sd=0.0), spill_flags=np.ones(2, bool))
        assert y[1] == pytest.approx(0.2)

    def test_noise_scale(self):
        g = WeightedGraph.from_edges([], [], nodes=range(50_000))
        y = outcomes(g, np.zeros(g.n, bool), OutcomeModelConfig(noise_sd=0.1))
        assert y.std() == pytest.approx(0.1, rel=0.02)

    @pytest.mark.parametrize("kwargs", [{"s_prob": 1.2}, {"noise_sd": -0.1}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            OutcomeModelConfig(**kwargs)


class TestTrueATE:
    @pytest.mark.parametrize("k, expected", [(4, 1.24), (10, 1.60), (20, 2.20)])
    def test_closed_form(self, k, expected):
        g = watts_strogatz(10_000, k, 0.1, seed=0)
        assert true_ate(g, OutcomeModelConfig()) == pytest.approx(expected)

    @pytest.mark.parametrize("k", [4, 10, 20])
    def test_monte_carlo_oracle(self, k):
        g = watts_strogatz(10_000, k, 0.1, seed=0)
        cfg = OutcomeModelConfig()
        assert true_ate_monte_carlo(g, cfg, draws=20, seed=1) == pytest.approx(true_ate(g, cfg), abs=0.005)

    @pytest.mark.parametrize("k, observed, bias", [(4, 1.215, -0.025), (10, 1.528, -0.072), (20, 2.044, -0.156)])
    def test_reference_biases(self, k, observed, bias):
        g = watts_strogatz(10_000, k, 0.1, seed=0)
        assert observed - true_ate(g, OutcomeModelConfig()) == pytest.approx(bias, abs=1e-9)


class TestSweep:
    def test_defaults(self):
        assert [n.k for n in PAPER_NETWORKS] == [4, 10, 20]
        assert len(PAPER_R_GRID) == 10 and PAPER_R_GRID[0] == 0.0 and PAPER_R_GRID[-1] == 1.0
        assert PAPER_REPS == 30

    def test_reps_precondition(self):
        with pytest.raises(ValueError, match="at least 2 replications required for CI"):
            run_sweep(SMALL, reps=1)

    def test_record_shape(self, small_sweep):
        assert len(small_sweep.records) == 2 * 5 * 6
        for row in small_sweep.records:
            assert row["valid"]
            assert row["bias"] == pytest.approx(row["ate_obs"] - (1.0 + 0.2 * row["mean_degree"] * 0.3))

    def test_positive_slope(self, small_sweep):
        for name in ("low", "high"):
            fit = small_sweep.fits[name]
            assert fit.slope > 0
            assert fit.r2 > 0.9

    def test_level_means_monotone(self, small_sweep):
        for name in ("low", "high"):
            levels = sorted(small_sweep.level_summary(name), key=lambda row: row["wgsr"])
            ates = [row["ate_obs"] for row in levels]
            assert all(b >= a - 0.01 for a, b in zip(ates, ates[1:]))

    def test_ci_contains_mean(self, small_sweep):
        for name in ("low", "high"):
            for row in small_sweep.level_summary(name):
                assert row["ci_low"] <= row["ate_obs"] <= row["ci_high"]
                assert row["reps"] == 6

    def test_deterministic(self, small_sweep):
        again = run_sweep(SMALL, r_grid=np.linspace(0, 1, 5), reps=6, seed=3)
        assert again.records == small_sweep.records

    def test_no_spillover_null(self):
        sweep = run_sweep(SMALL[1:], r_grid=np.linspace(0, 1, 6), reps=8, seed=5,
                          cfg=OutcomeModelConfig(delta=0.0))
        fit = sweep.fits["high"]
        assert abs(fit.slope) <= 2 * fit.slope_se

    def test_invalid_cells_reported(self):
        sweep = run_sweep([NetworkSpec("tiny", 12, 2, 0.0)], r_grid=[0.0, 1.0], reps=3,
                          num_buckets=1000, treat_buckets=(0,), ctrl_buckets=(1,))
        invalid = [r for r in sweep.records if not r["valid"]]
        assert invalid
        assert sweep.fits["tiny"].invalid_cells == len(invalid)

    def test_csv(self, small_sweep, tmp_path):
        path = tmp_path / "sweep.csv"
        small_sweep.write_csv(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["network", "mean_degree", "r", "rep", "wgsr", "ate_obs", "bias"]
        assert len(rows) == 61
        assert rows[1][4].count(".") == 1 and len(rows[1][4].split(".")[1]) == 9

    def test_fit_json(self, small_sweep, tmp_path):
        path = tmp_path / "fit.json"
        small_sweep.write_fit_json(path)
        data = json.loads(path.read_text())
        assert set(data["networks"]) == {"low", "high"}
        assert data["config"]["reps"] == 6
        assert {"slope", "intercept", "r2", "extrapolated_ate"} <= set(data["networks"]["low"])


class TestBiasReduction:
    @staticmethod
    def _sweep(bias_lo, bias_hi):
        rows = []
        for rep in range(2):
            rows.append({"network": "x", "r": 1.0, "rep": rep, "wgsr": 0.5, "ate_obs": 1 + bias_lo, "bias": bias_lo,
                         "valid": True})
            rows.append({"network": "x", "r": 0.0, "rep": rep, "wgsr": 0.95, "ate_obs": 1 + bias_hi,
                         "bias": bias_hi, "valid": True})
        return SweepResult(records=rows)

    def test_reference_values(self):
        assert bias_reduction(self._sweep(-0.240, -0.025), "x") == pytest.approx(0.896, abs=1e-3)
        assert bias_reduction(self._sweep(-1.199, -0.156), "x") == pytest.approx(0.870, abs=1e-3)

    def test_identical(self):
        assert bias_reduction(self._sweep(-0.3, -0.3), "x") == 0.0

    def test_missing_network(self):
        with pytest.raises(ValueError):
            bias_reduction(self._sweep(-0.3, -0.1), "y")


def test_level_ci_matches_scipy(small_sweep):
    row = small_sweep.level_summary("low")[2]
    ates = [r["ate_obs"] for r in small_sweep.cells("low") if r["r"] == row["r"]]
    lo, hi = stats.t.interval(0.95, len(ates) - 1, loc=np.mean(ates), scale=stats.sem(ates))
    assert (row["ci_low"], row["ci_high"]) == pytest.approx((lo, hi))
