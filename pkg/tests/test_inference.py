import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import pseudo_outcomes_loop, welch_textbook
from spillover.inference import (
    BucketTable,
    InferenceError,
    aggregate_ratios,
    analyze,
    cupac,
    cupac_predictions,
    cuped,
    delta_pseudo,
    dim_inference,
    fold_of,
    linear_predictor,
    select_covariates,
    var_red,
)


def random_table(seed: int, buckets: int = 40, p: int = 3, effect: float = 0.0) -> BucketTable:
    rng = np.random.default_rng(seed)
    treated = np.arange(buckets) % 2 == 1
    n = rng.integers(500, 1500, size=buckets).astype(float)
    x = rng.normal(size=(buckets, p))
    rate = 0.3 + 0.02 * x @ np.linspace(1.0, 0.2, p) + effect * treated + 0.01 * rng.normal(size=buckets)
    return BucketTable(np.arange(buckets) * 7 + 3, treated, rate * n, n, x)


class TestTable:
    def test_csv_roundtrip(self, tmp_path):
        t = random_table(0)
        path = tmp_path / "b.csv"
        t.to_csv(path)
        back = BucketTable.from_csv(path)
        assert np.array_equal(back.y, t.y) and np.array_equal(back.x, t.x)
        assert back.covariate_names == ("x1", "x2", "x3")

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "id,arm,y,n\n",
            "bucket_id,arm,y,n\n1,placebo,1,1\n",
            "bucket_id,arm,y,n\n1,treatment,1\n",
            "bucket_id,arm,y,n\n1,treatment,a,1\n",
            "bucket_id,arm,y,n\n1,treatment,1,0\n",
            "bucket_id,arm,y,n\n1,treatment,1,1\n1,control,1,1\n",
        ],
    )
    def test_bad_csv(self, tmp_path, text):
        path = tmp_path / "b.csv"
        path.write_text(text)
        with pytest.raises(InferenceError):
            BucketTable.from_csv(path)


class TestRatios:
    def test_aggregate(self):
        t = BucketTable([0, 1, 2, 3], [True, True, False, False], [2, 4, 1, 1], [1, 1, 1, 1], np.zeros((4, 0)))
        assert aggregate_ratios(t) == (3.0, 1.0, 2.0)

    def test_identical_arms(self):
        t = BucketTable([0, 1], [True, False], [5, 5], [2, 2], np.zeros((2, 0)))
        assert aggregate_ratios(t)[2] == 0.0

    def test_unit_denominators(self):
        y = np.array([2.0, 4.0, 7.0, 1.0])
        t = BucketTable(range(4), [1, 1, 0, 0], y, np.ones(4), np.zeros((4, 0)))
        assert np.allclose(delta_pseudo(t).z, y)

    def test_two_bucket_example(self):
        t = BucketTable([0, 1], [1, 0], [2.0, 4.0], [1.0, 1.0], np.zeros((2, 0)))
        z = delta_pseudo(t).z
        assert z.tolist() == [2.0, 4.0] and z.mean() == 3.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_loop(self, seed):
        t = random_table(seed)
        assert np.allclose(delta_pseudo(t).z, pseudo_outcomes_loop(t.y.tolist(), t.n.tolist()), rtol=1e-13)


@settings(max_examples=100, deadline=None)
@given(
    arrays(np.float64, 12, elements=st.floats(0, 1e4)),
    arrays(np.float64, 12, elements=st.floats(1, 1e4)),
)
def test_mean_identity(y, n):
    t = BucketTable(np.arange(12), np.arange(12) % 2 == 0, y, n, np.zeros((12, 0)))
    z = delta_pseudo(t).z
    pooled = y.sum() / n.sum()
    assert z.mean() == pytest.approx(pooled, rel=1e-12, abs=1e-12)


class TestDIM:
    @pytest.mark.parametrize("seed", range(20))
    def test_welch_oracle(self, seed):
        t = random_table(seed, buckets=int(np.random.default_rng(seed).integers(6, 80)), effect=0.01)
        r = dim_inference(t)
        z = delta_pseudo(t).z
        ref = welch_textbook(z[t.treated], z[~t.treated])
        for key in ("ate", "variance", "t", "df"):
            assert getattr(r, key) == pytest.approx(ref[key], rel=1e-9, abs=1e-12)
        assert r.p_value == pytest.approx(ref["p"], rel=1e-9, abs=1e-12)

    def test_equal_variance_df(self):
        zt = np.array([1.0, 2.0, 3.0, 4.0])
        zc = zt + 10.0
        t = BucketTable(range(8), [1] * 4 + [0] * 4, np.concatenate([zt, zc]), np.ones(8), np.zeros((8, 0)))
        assert dim_inference(t).df == pytest.approx(6.0)

    def test_same_multiset(self):
        z = np.array([1.0, 3.0, 2.0, 2.0, 1.0, 3.0])
        t = BucketTable(range(6), [1, 1, 1, 0, 0, 0], z, np.ones(6), np.zeros((6, 0)))
        r = dim_inference(t)
        assert r.ate == 0.0 and r.p_value == pytest.approx(1.0)

    def test_degenerate_variance(self):
        t = BucketTable(range(4), [1, 1, 0, 0], [2.0, 2.0, 1.0, 1.0], np.ones(4), np.zeros((4, 0)))
        r = dim_inference(t)
        assert r.p_value == 0.0 and "degenerate_variance" in r.flags

    def test_single_bucket_arm(self):
        t = BucketTable(range(3), [1, 0, 0], [1.0, 2.0, 3.0], np.ones(3), np.zeros((3, 0)))
        with pytest.raises(InferenceError, match="at least 2 buckets per arm"):
            dim_inference(t)

    def test_ci_and_relative_diff(self):
        r = dim_inference(random_table(2, effect=0.02))
        assert r.ci95[0] < r.ate < r.ci95[1]
        assert r.relative_diff_pct == pytest.approx(r.ate / r.control_ratio * 100)
        assert r.var_red == 0.0

    def test_null_calibration(self):
        rng = np.random.default_rng(11)
        base = random_table(0, buckets=60)
        rejections = 0
        for _ in range(1000):
            t = BucketTable(base.bucket_id, rng.permutation(base.treated), base.y, base.n, base.x)
            rejections += dim_inference(t).p_value < 0.05
        assert 0.035 <= rejections / 1000 <= 0.065


class TestVarRed:
    def test_equal(self):
        r = dim_inference(random_table(1))
        assert var_red(r, r) == 0.0

    def test_arithmetic(self):
        dim = dim_inference(random_table(1))
        other = dim_inference(random_table(1))
        other.variance = 0.0655 * dim.variance
        assert var_red(other, dim) == pytest.approx(0.9345)


class TestCUPED:
    def test_covariate_equal_to_z(self):
        t = random_table(3)
        z = delta_pseudo(t).z
        r = cuped(BucketTable(t.bucket_id, t.treated, t.y, t.n, z[:, None]))
        assert r.theta == pytest.approx(1.0)
        assert r.variance == pytest.approx(0.0, abs=1e-20)

    def test_affine_covariate(self):
        t = random_table(4)
        z = delta_pseudo(t).z
        r = cuped(BucketTable(t.bucket_id, t.treated, t.y, t.n, (2 * z + 5)[:, None]))
        assert r.theta == pytest.approx(0.5)
        assert r.variance == pytest.approx(0.0, abs=1e-20)

    def test_noise_covariate(self):
        rng = np.random.default_rng(0)
        t = random_table(5, buckets=4000)
        noisy = BucketTable(t.bucket_id, t.treated, t.y, t.n, rng.normal(size=(4000, 1)))
        r = cuped(noisy)
        assert abs(r.var_red) < 0.01

    def test_constant_covariate(self):
        t = random_table(5)
        with pytest.raises(InferenceError, match="zero variance"):
            cuped(BucketTable(t.bucket_id, t.treated, t.y, t.n, np.ones((t.num_buckets, 1))))

    def test_by_name(self):
        t = random_table(6)
        assert cuped(t, "x2").theta == cuped(t, 1).theta


class TestLinearPredictor:
    def test_exact_line(self):
        x = np.arange(10.0)
        f = linear_predictor(x, 3 * x + 1)
        assert f.coef[0] == pytest.approx(3.0, abs=1e-6)
        assert f.intercept == pytest.approx(1.0, abs=1e-6)

    def test_collinear_matches_pinv(self):
        rng = np.random.default_rng(0)
        x1 = rng.normal(size=30)
        x = np.column_stack([x1, x1, rng.normal(size=30)])
        z = 2 * x1 - x[:, 2] + 0.5
        f = linear_predictor(x, z)
        design = np.column_stack([np.ones(30), x])
        oracle = design @ (np.linalg.pinv(design) @ z)
        assert np.all(np.isfinite(f.coef))
        assert np.allclose(f(x), oracle, atol=1e-6)
        assert np.allclose(f(x), z, atol=1e-6)

    def test_constant_covariate(self):
        z = np.array([1.0, 2.0, 4.0, 5.0])
        f = linear_predictor(np.column_stack([np.ones(4), [0.0, 1.0, 2.0, 3.0]]), z)
        assert f.coef[0] == pytest.approx(0.0, abs=1e-9)
        f0 = linear_predictor(np.full(4, 7.0), z)
        assert f0.coef[0] == pytest.approx(0.0, abs=1e-9) and f0.intercept == pytest.approx(z.mean())

    def test_too_few_rows(self):
        with pytest.raises(InferenceError):
            linear_predictor([[1.0]], [1.0])


class TestCUPAC:
    def test_constant_model_falls_back(self):
        t = random_table(7)

        def constant(x, z):
            return lambda xx: np.full(len(xx), 0.3)

        r = cupac(t, model=constant)
        dim = dim_inference(t)
        assert "no_signal" in r.flags
        assert r.ate == dim.ate and r.variance == dim.variance

    def test_perfect_covariates_null_table(self):
        rng = np.random.default_rng(3)
        b = 60
        x = rng.normal(size=(b, 3))
        n = np.full(b, 100.0)
        rate = 0.3 + 0.02 * x @ np.array([1.0, -0.5, 0.25])
        t = BucketTable(np.arange(b), np.arange(b) % 2 == 0, rate * n, n, x)
        r = cupac(t, k=5)
        dim = dim_inference(t)
        assert r.variance < 1e-12 * dim.variance + 1e-20
        z = delta_pseudo(t).z
        # Closed form: with exact linear predictions theta = 1 and Z_adj = mean(Z).
        assert r.theta == pytest.approx(1.0, abs=1e-6)
        assert r.ate == pytest.approx(0.0, abs=1e-9)
        assert dim.ate == pytest.approx(z[t.treated].mean() - z[~t.treated].mean())

    def test_row_order_invariant(self):
        t = random_table(8, buckets=50)
        order = np.random.default_rng(1).permutation(50)
        a = cupac(t, k=5, seed=2)
        b = cupac(t.permuted(order), k=5, seed=2)
        assert a.ate == pytest.approx(b.ate, rel=1e-12)
        assert a.variance == pytest.approx(b.variance, rel=1e-12)

    def test_fold_assignment(self):
        folds = fold_of(np.arange(1000), 5, seed=0)
        assert set(folds.tolist()) == set(range(5))
        assert np.all(np.abs(np.bincount(folds) - 200) < 50)

    def test_treatment_prediction_is_model_average(self):
        t = random_table(9, buckets=30)
        pred = cupac_predictions(t, k=3, seed=0)
        z = delta_pseudo(t).z
        folds = fold_of(t.bucket_id, 3, 0)
        ctrl = ~t.treated
        models = [linear_predictor(t.x[ctrl & (folds != f)], z[ctrl & (folds != f)]) for f in range(3)]
        expected = np.mean([m(t.x[t.treated]) for m in models], axis=0)
        assert np.allclose(pred[t.treated], expected)
        for f in range(3):
            held = ctrl & (folds == f)
            assert np.allclose(pred[held], models[f](t.x[held]))

    def test_in_sample_flag(self):
        r = cupac(random_table(10), cross_fit=False)
        assert "in_sample" in r.flags and r.folds == 1

    @pytest.mark.parametrize("k", [1, 30])
    def test_fold_errors(self, k):
        with pytest.raises(InferenceError):
            cupac(random_table(11, buckets=40), k=k)

    def test_needs_covariates(self):
        t = random_table(12)
        with pytest.raises(InferenceError):
            cupac(BucketTable(t.bucket_id, t.treated, t.y, t.n, np.zeros((t.num_buckets, 0))))

    def test_estimand_preserved_under_null(self):
        rng = np.random.default_rng(21)
        base = random_table(0, buckets=100, p=4)
        ates = []
        for _ in range(300):
            t = BucketTable(base.bucket_id, rng.permutation(base.treated), base.y, base.n, base.x)
            ates.append(cupac(t, k=5).ate)
        ates = np.array(ates)
        assert abs(ates.mean()) <= 2 * ates.std(ddof=1) / np.sqrt(len(ates))

    def test_in_sample_beats_cuped_on_average(self):
        wins = 0
        for seed in range(100):
            t = random_table(seed, buckets=60, p=3)
            wins += cupac(t, cross_fit=False).var_red >= cuped(t, 0).var_red - 1e-12
        assert wins >= 90


class TestSelect:
    def test_copy_of_z_selected(self):
        t = random_table(0)
        z = delta_pseudo(t).z
        t2 = BucketTable(t.bucket_id, t.treated, t.y, t.n, np.column_stack([t.x, z]))
        assert 3 in select_covariates(t2, 0.3)

    @pytest.mark.filterwarnings("ignore:no covariate")
    def test_noise_dropped(self):
        rng = np.random.default_rng(0)
        dropped = 0
        for trial in range(200):
            t = random_table(trial, buckets=1000, p=1)
            noisy = BucketTable(t.bucket_id, t.treated, t.y, t.n, rng.normal(size=(1000, 1)))
            dropped += select_covariates(noisy, 0.3) == []
        assert dropped == 200

    def test_empty_warns(self):
        t = random_table(0)
        flat = BucketTable(t.bucket_id, t.treated, t.y, t.n, np.ones((t.num_buckets, 1)))
        with pytest.warns(UserWarning):
            assert select_covariates(flat) == []


class TestAnalyze:
    def test_three_reports(self):
        reports = analyze(random_table(0), ["dim", "cuped", "cupac"], k=5)
        assert [r.estimator for r in reports] == ["DIM", "CUPED", "CUPAC"]
        payload = json.dumps([r.to_dict() for r in reports])
        assert "relative_diff_pct" in payload

    def test_unknown(self):
        with pytest.raises(ValueError):
            analyze(random_table(0), ["ols"])
