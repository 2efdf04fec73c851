import numpy as np
import pytest

from ttgp.harness import (
    ExperimentConfig,
    clamp_improvement,
    expand_grid,
    mse,
    mse_rel,
    reports_to_csv,
    run_experiment,
    sample_gp_function,
    sample_omega,
)


class TestSyntheticFunction:
    def test_rbf_covariance(self):
        r, ls = 0.3, 0.3
        x = np.linspace(0, 30, 100)[:, None]
        prods = []
        for seed in range(200):
            f = sample_gp_function("rbf", ls, 1, m=4096, seed=seed)
            prods.append(np.mean(f(x) * f(x + r)))
        assert np.mean(prods) == pytest.approx(np.exp(-0.5), abs=0.05)

    def test_unit_variance(self):
        f = sample_gp_function("matern52", 0.5, 2, m=2048, seed=0)
        vals = f(np.random.default_rng(0).random((4000, 2)) * 50)
        assert np.var(vals) == pytest.approx(1.0, abs=0.2)

    def test_deterministic(self):
        x = np.random.default_rng(0).random((20, 3))
        a = sample_gp_function("matern32", 0.4, 3, seed=9)(x)
        b = sample_gp_function("matern32", 0.4, 3, seed=9)(x)
        assert np.array_equal(a, b)

    def test_exponential_is_rough(self):
        x = np.linspace(0, 1, 2001)[:, None]

        def roughness(family):
            ratios = []
            for seed in range(5):
                y = sample_gp_function(family, 0.5, 1, seed=seed)(x)
                ratios.append(np.mean(np.abs(np.diff(y))) / (x[1, 0] - x[0, 0]))
            return np.median(ratios)

        assert roughness("exp") > 5 * roughness("rbf")

    def test_validation(self):
        with pytest.raises(ValueError):
            sample_gp_function("rbf", 0.0, 2)
        with pytest.raises(ValueError):
            sample_gp_function("rbf", 1.0, 2, m=0)


class TestSampleOmega:
    def test_full_grid(self):
        tr, te = sample_omega((3, 4), 12, 0, seed=0)
        assert len({tuple(r) for r in tr}) == 12 and te.shape == (0, 2)
        assert tr.min() == 1 and tr[:, 0].max() == 3 and tr[:, 1].max() == 4

    @pytest.mark.parametrize("seed", range(5))
    def test_disjoint(self, seed):
        tr, te = sample_omega((5, 5, 5), 60, 40, seed=seed)
        assert not {tuple(r) for r in tr} & {tuple(r) for r in te}
        assert len({tuple(r) for r in tr}) == 60

    def test_seeded(self):
        a = sample_omega((6, 6), 10, 5, seed=3)
        b = sample_omega((6, 6), 10, 5, seed=3)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_infeasible(self):
        with pytest.raises(ValueError):
            sample_omega((2, 2), 3, 2)


class TestMetrics:
    def test_perfect(self):
        assert mse([1, 2], [1, 2]) == 0 and mse_rel([1, 2], [1, 2]) == 0

    def test_mean_predictor(self):
        y = np.array([0.3, 1.7, -2.0, 4.1])
        assert mse_rel(np.full(4, y.mean()), y) == pytest.approx(1.0, rel=1e-14)

    def test_hand_case(self):
        assert mse([0, 0], [1, -1]) == 1.0
        assert mse_rel([0, 0], [1, -1]) == 1.0

    def test_zero_variance(self):
        with pytest.raises(ValueError):
            mse_rel([1, 2], [3, 3])

    def test_clamp(self):
        assert clamp_improvement(3.7) == 1.0
        assert clamp_improvement(-2.0) == -1.0
        assert clamp_improvement(0.25) == 0.25


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"dimension": 3})

    def test_resolved_sizes(self):
        assert ExperimentConfig(d=4, N=1000, N_test=1000).resolved_sizes() == (1000, 1000)
        assert ExperimentConfig(d=3, N=1000, N_test=1000).resolved_sizes() == (900, 100)
        assert ExperimentConfig(d=3, N=500, N_test=1000).resolved_sizes() == (500, 500)

    def test_expand_grid(self):
        cells = expand_grid({"kernel": ["rbf", "matern52"], "d": [3, 4], "seeds": [0, 1, 2], "n": 6})
        assert len(cells) == 12
        assert {c.n for c in cells} == {6}
        assert sorted({c.seed for c in cells}) == [0, 1, 2]


SMALL = dict(d=3, n=6, N=80, N_test=40, n_iters=5, gp_starts=1, gp_max_train=200)


class TestExperiment:
    def test_runs_both_arms(self):
        rep = run_experiment(dict(SMALL, kernel="rbf", lengthscale=1.0))
        assert set(rep.arms) == {"gp", "random"}
        assert not rep.arms["gp"].error and not rep.arms["random"].error
        assert len(rep.candidates) == 6
        assert rep.improvement == clamp_improvement(rep.improvement_raw)

    def test_pure_function_of_config(self):
        a = reports_to_csv([run_experiment(dict(SMALL, seed=2))])
        b = reports_to_csv([run_experiment(dict(SMALL, seed=2))])
        assert a == b
        assert a.splitlines()[0].startswith("kernel,d,n,N,seed")

    def test_constant_data(self, tmp_path):
        from ttgp.observations import ObservationSet, save_observations

        idx, _ = sample_omega((5, 5, 5), 100, 0, seed=0)
        save_observations(ObservationSet((5, 5, 5), idx, np.full(100, 3.0)), tmp_path / "c.csv")
        rep = run_experiment(dict(d=3, n=5, N_test=20, n_iters=30, tol=0.0, gp_starts=1,
                                  obs_path=str(tmp_path / "c.csv")))
        # zero test variance leaves MSE_rel and the improvement undefined
        assert not rep.arms["gp"].error and not rep.arms["random"].error
        assert np.isnan(rep.arms["gp"].test_mse_rel)
        assert rep.arms["gp"].test_mse <= 1e-12
        assert rep.arms["random"].test_mse <= 1e-12
        assert np.isnan(rep.improvement)

    def test_failure_is_partial(self):
        rep = run_experiment(dict(SMALL, gp_family="bogus"))
        assert rep.arms["gp"].error
        assert not rep.arms["random"].error
