"""Oracle gradients, dispersion studies, angle histograms, bound checks."""

import numpy as np
import pytest

from pgpe import (
    Dataset,
    EstimatorConfig,
    HyperParams,
    IterationBatch,
    ToyEnv,
    angle_experiment,
    angle_study,
    bound_check,
    estimate_gradient,
    gradient_study,
    oracle_gradient,
    sample_returns,
)
from pgpe.analysis import return_surface


def std_rho():
    return HyperParams(np.zeros(1), np.ones(1))


class TestOracleGradient:
    def test_disjoint_seeds_agree(self):
        env, rho = ToyEnv(), std_rho()
        a = oracle_gradient(env, rho, 100_000, 10, 0.9, np.random.default_rng(1))
        b = oracle_gradient(env, rho, 100_000, 10, 0.9, np.random.default_rng(2))
        se = _oracle_se(env, rho, 100_000, seed=3)
        assert np.all(np.abs(a.stacked() - b.stacked()) < 4 * np.sqrt(2) * se)

    def test_sample_sizes_converge(self):
        env, rho = ToyEnv(), std_rho()
        small = oracle_gradient(env, rho, 10_000, 10, 0.9, np.random.default_rng(4))
        big = oracle_gradient(env, rho, 100_000, 10, 0.9, np.random.default_rng(5))
        se_small = _oracle_se(env, rho, 10_000, seed=6)
        se_big = _oracle_se(env, rho, 100_000, seed=7)
        assert np.all(np.abs(small.stacked() - big.stacked()) < 4 * np.hypot(se_small, se_big))

    def test_return_shift_barely_moves_the_estimate(self):
        # Adding a constant to every return only couples through the score
        # mean, which vanishes in expectation.
        env, rho = ToyEnv(), std_rho()
        thetas, returns = sample_returns(env, rho, 100_000, 10, 0.9, np.random.default_rng(8))
        base = estimate_gradient(
            Dataset([IterationBatch(1, rho, thetas, returns)]), rho, EstimatorConfig()
        )
        shifted = estimate_gradient(
            Dataset([IterationBatch(1, rho, thetas, returns + 3.0)]), rho, EstimatorConfig()
        )
        se = _oracle_se(env, rho, 100_000, seed=9)
        # The difference is 3 * mean(score); allow 4 SE of that mean.
        assert np.all(np.abs(shifted.stacked() - base.stacked()) < 4 * 3.0 * se / 10.0)

    def test_se_scales_like_inverse_sqrt_n(self):
        # Dispersion of repeated oracles at n and 10n: the ratio should sit
        # near 1/sqrt(10) ~ 0.316.
        env, rho = ToyEnv(), std_rho()
        rng = np.random.default_rng(10)
        reps = {n: [] for n in (1_000, 10_000)}
        for n in reps:
            for _ in range(30):
                est = oracle_gradient(env, rho, n, 10, 0.9, rng)
                reps[n].append(est.stacked())
        spread = {n: np.linalg.norm(np.std(np.array(v), axis=0, ddof=1)) for n, v in reps.items()}
        ratio = spread[10_000] / spread[1_000]
        assert 0.25 < ratio < 0.45

    def test_minimum_sample_count(self):
        with pytest.raises(ValueError, match="1000"):
            oracle_gradient(ToyEnv(), std_rho(), 500, 10, 0.9, np.random.default_rng(0))


def _oracle_se(env, rho, n, seed):
    """Per-component standard error of the plain estimator at size n."""
    from pgpe import score

    thetas, returns = sample_returns(env, rho, n, 10, 0.9, np.random.default_rng(seed))
    s = score(rho, thetas)
    terms = returns[:, None] * np.hstack([s.d_eta, s.d_tau])
    return terms.std(axis=0, ddof=1) / np.sqrt(n)


@pytest.fixture(scope="module")
def small_study():
    env = ToyEnv()
    rng = np.random.default_rng(55)
    rho0 = HyperParams(np.array([-0.5]), np.ones(1))
    return gradient_study(
        env, rho0, rng, iterations=5, trials=50, oracle_samples=2_000
    )


class TestGradientStudy:
    def test_identical_streams_collapse_variance(self):
        env = ToyEnv()
        study = gradient_study(
            env,
            std_rho(),
            np.random.default_rng(20),
            iterations=2,
            trials=2,
            oracle_samples=1_000,
            identical_trial_streams=True,
        )
        for c in study.cells:
            assert c.var == 0.0

    def test_variance_bias_mse_identity(self, small_study):
        for c in small_study.cells:
            assert abs(c.var + c.bias2 - c.mse) <= 1e-8 * max(1.0, c.mse)

    def test_nonnegative_statistics(self, small_study):
        for c in small_study.cells:
            assert c.var >= 0.0 and c.bias2 >= 0.0 and c.mse >= 0.0

    def test_sample_counts_follow_windows(self, small_study):
        for L in range(1, 6):
            assert small_study.cell(L, "PGPE", "eta").n_samples == 10
            assert small_study.cell(L, "IW-PGPE", "eta").n_samples == 10 * L

    def test_unit_weights_for_unweighted_methods(self, small_study):
        for method in ("PGPE", "PGPE_OB", "NIW-PGPE", "NIW-PGPE_OB"):
            for c in small_study.cells:
                if c.method == method:
                    assert c.weight_max == 1.0 and c.weight_min == 1.0

    def test_path_and_oracle_recorded(self, small_study):
        assert len(small_study.rho_path) == 5
        assert len(small_study.oracle_grads) == 5

    def test_threads_do_not_change_results(self):
        env = ToyEnv()
        kwargs = dict(iterations=3, trials=8, oracle_samples=1_000)
        a = gradient_study(env, std_rho(), np.random.default_rng(31), **kwargs)
        b = gradient_study(env, std_rho(), np.random.default_rng(31), threads=4, **kwargs)
        for ca, cb in zip(a.cells, b.cells):
            assert ca == cb

    def test_requires_two_trials(self):
        with pytest.raises(ValueError, match="2 trials"):
            gradient_study(ToyEnv(), std_rho(), np.random.default_rng(0), trials=1)


class TestAngleStudy:
    def test_aligned_estimate(self):
        res = angle_study(np.array([1.0, 2.0]), [np.array([2.0, 4.0])])
        assert res.angles[0] == pytest.approx(0.0, abs=1e-12)

    def test_opposed_estimate(self):
        res = angle_study(np.array([1.0, 0.0]), [np.array([-3.0, 0.0])])
        assert abs(res.angles[0]) == pytest.approx(180.0, rel=1e-12)

    def test_counterclockwise_is_positive(self):
        res = angle_study(np.array([1.0, 0.0]), [np.array([0.0, 1.0])])
        assert res.angles[0] == pytest.approx(90.0, rel=1e-12)

    def test_rotation_consistency(self):
        rng = np.random.default_rng(41)
        t = rng.normal(size=2)
        ests = [rng.normal(size=2) for _ in range(50)]
        base = angle_study(t, ests)
        phi = 1.234
        R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
        rotated = angle_study(R @ t, [R @ e for e in ests])
        np.testing.assert_allclose(rotated.angles, base.angles, atol=1e-9)

    def test_zero_norm_excluded_and_counted(self):
        res = angle_study(np.array([1.0, 0.0]), [np.zeros(2), np.array([1.0, 1.0])])
        assert res.n_excluded == 1
        assert len(res.angles) == 1
        np.testing.assert_array_equal(res.kept_indices, [1])

    def test_histogram_bins(self):
        rng = np.random.default_rng(43)
        ests = [rng.normal(size=2) for _ in range(200)]
        res = angle_study(np.array([1.0, 1.0]), ests)
        assert res.hist_counts.sum() == 200
        assert res.hist_edges[0] == -180.0 and res.hist_edges[-1] == 180.0
        assert len(res.hist_counts) == 12

    def test_reference_must_be_2d(self):
        with pytest.raises(ValueError, match="2-vector"):
            angle_study(np.array([1.0, 2.0, 3.0]), [])


class TestAngleExperiment:
    def test_off_policy_directions(self):
        env = ToyEnv()
        target = HyperParams(np.array([-0.8]), np.array([0.5]))
        behavior = HyperParams(np.array([-1.6]), np.array([1.0]))
        results = angle_experiment(
            env, target, behavior, np.random.default_rng(47),
            trials=10, oracle_samples=2_000,
        )
        assert set(results) == {"NIW-PGPE", "IW-PGPE", "IW-PGPE_OB"}
        for res in results.values():
            assert len(res.angles) + res.n_excluded == 10
            assert np.all(res.angles >= -180.0) and np.all(res.angles <= 180.0)

    def test_rejects_multidimensional_env(self):
        from pgpe import MountainCarEnv

        with pytest.raises(ValueError, match="one-dimensional"):
            angle_experiment(
                MountainCarEnv(),
                HyperParams(np.zeros(12), np.ones(12)),
                HyperParams(np.zeros(12), np.ones(12)),
                np.random.default_rng(0),
            )


class TestBoundCheck:
    def test_rows_cover_all_iterations_blocks_and_checks(self, small_study):
        report = bound_check(small_study, reward_low=1.0, reward_high=2.0)
        kinds = {(r.iteration, r.block, r.check) for r in report.rows}
        for L in range(1, 6):
            for block in ("eta", "tau"):
                assert (L, block, "variance_bound") in kinds
                assert (L, block, "reduction_lower") in kinds
                assert (L, block, "reduction_upper") in kinds
                assert (L, block, "baselined_variance_bound") in kinds

    def test_tau_bound_is_double_eta_bound(self, small_study):
        report = bound_check(small_study, reward_low=1.0, reward_high=2.0)
        by_key = {(r.iteration, r.block, r.check, r.method): r.bound for r in report.rows}
        for (L, block, check, method), bound in by_key.items():
            if block == "eta":
                assert by_key[(L, "tau", check, method)] == pytest.approx(2 * bound, rel=1e-12)

    def test_failures_listed(self, small_study):
        report = bound_check(small_study, reward_low=1.0, reward_high=2.0)
        assert report.failures() == [r for r in report.rows if not r.passed]


def test_return_surface_shape():
    env = ToyEnv()
    surf = return_surface(
        env, np.array([-1.0, 0.0]), np.array([0.5, 1.0, 1.5]), np.random.default_rng(51), n=50
    )
    assert surf.shape == (2, 3)
    lo, hi = (1 - 0.9**10) / 0.1, 2 * (1 - 0.9**10) / 0.1
    assert np.all(surf > lo) and np.all(surf <= hi)
