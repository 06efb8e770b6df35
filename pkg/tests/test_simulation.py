import numpy as np
import pytest
from scipy.special import ndtri

from pairadjust.core import adjusted_outcomes
from pairadjust.estimators import fit_working_model
from pairadjust.simulation import (
    ModelSpec,
    default_methods,
    generate_model,
    method_spec,
    realize_experiment,
    run_monte_carlo,
    run_replication,
    summary_rows,
)


def big_draw(model, n_pairs=500_000, delta=0.25, seed=987):
    return generate_model(ModelSpec(model, n_pairs, delta, seed))


class TestGenerateModel:
    @pytest.mark.parametrize("model", [1, 4, 7, 12])
    def test_homogeneous_models_have_mean_effect_delta(self, model):
        draw = big_draw(model)
        diff = draw.y1 - draw.y0
        se = diff.std() / np.sqrt(diff.size)
        assert abs(diff.mean() - 0.25) < 3 * se

    def test_model1_conditional_mean_centered(self):
        draw = big_draw(1)
        m0 = 4.0 * (draw.w[:, 0] - 0.5)
        se = m0.std() / np.sqrt(m0.size)
        assert abs(m0.mean()) < 3 * se

    def test_model1_covariates_in_unit_interval(self):
        draw = big_draw(1, n_pairs=5000)
        assert draw.x.min() > 0 and draw.x.max() < 1
        assert draw.w.min() > 0 and draw.w.max() < 1

    def test_model12_latent_correlation_matches_toeplitz(self):
        draw = big_draw(12, n_pairs=250_000)
        v1 = ndtri(draw.x[:, 0])
        v2 = ndtri(draw.x[:, 1])
        r = np.corrcoef(v1, v2)[0, 1]
        se = (1 - 0.5**2) / np.sqrt(v1.size)
        assert abs(r - 0.5) < 3 * se

    def test_model12_dimensions(self):
        draw = big_draw(12, n_pairs=50)
        assert draw.x.shape == (100, 4)
        assert draw.w.shape == (100, 40)

    def test_heteroscedastic_model_scales_noise(self):
        draw = big_draw(6, n_pairs=100_000)
        # sigma = Phi(x) + 0.5 in (0.5, 1.5): residual spread grows with x
        resid = draw.y1 - draw.y0 - 0.25
        low = resid[draw.x[:, 0] < -1.0]
        high = resid[draw.x[:, 0] > 1.0]
        assert high.std() > 1.5 * low.std()


class TestRunReplication:
    def test_deterministic_given_seed_and_index(self):
        spec = ModelSpec(2, 30, 0.25, 77)
        kinds = [method_spec(m, 2, 30) for m in ("unadjusted", "pfe")]
        a = run_replication(spec, kinds, 5)
        b = run_replication(spec, kinds, 5)
        for name in a:
            assert a[name].delta_hat == b[name].delta_hat  # bit identical
            assert a[name].std_error == b[name].std_error

    def test_reject_flag_and_interval(self):
        spec = ModelSpec(1, 50, 0.0, 3)
        kinds = [method_spec("unadjusted", 1, 50)]
        rep = run_replication(spec, kinds, 0)["unadjusted"]
        assert rep.reject_h0 in (True, False)
        assert rep.ci_lower <= rep.delta_hat <= rep.ci_upper

    def test_delta_matches_adjusted_outcome_path(self):
        spec = ModelSpec(7, 25, 0.25, 13)
        names = ("unadjusted", "naive", "pfe", "refit")
        kinds = [method_spec(m, 7, 25) for m in names]
        for r in (0, 3):
            reports = run_replication(spec, kinds, r)
            data = realize_experiment(spec, r)
            for kind in kinds:
                wm = fit_working_model(data, kind)
                yt = adjusted_outcomes(data, wm)
                n = data.n_pairs
                dim = yt[data.d == 1].sum() / n - yt[data.d == 0].sum() / n
                assert reports[kind.label].delta_hat == pytest.approx(
                    dim, abs=1e-12
                )

    def test_multivariate_models_get_reordered_plans(self):
        data = realize_experiment(ModelSpec(7, 40, 0.0, 5), 0)
        # consecutive pairs should be closer on average than a random order
        from pairadjust.design import closeness_diagnostics
        from pairadjust.core import PairingPlan

        rng = np.random.default_rng(0)
        shuffled = PairingPlan(data.plan.pairs[rng.permutation(40)])
        ordered = closeness_diagnostics(data.plan, data.x).cross_pair_dist_r2
        random_order = closeness_diagnostics(shuffled, data.x).cross_pair_dist_r2
        assert ordered < random_order


class TestRunMonteCarlo:
    def test_single_replication_summary_is_indicator(self):
        spec = ModelSpec(1, 40, 0.0, 11)
        kinds = [method_spec(m, 1, 40) for m in ("unadjusted", "pfe")]
        summary = run_monte_carlo(spec, kinds, 1)
        rep = run_replication(spec, kinds, 0)
        for m in summary.methods:
            assert m.replications == 1
            assert m.rejection_rate == float(rep[m.method].reject_h0)
            assert m.mean_std_error == rep[m.method].std_error

    def test_worker_count_does_not_change_results(self):
        spec = ModelSpec(2, 25, 0.25, 19)
        kinds = [method_spec(m, 2, 25) for m in ("unadjusted", "naive", "pfe")]
        serial = run_monte_carlo(spec, kinds, 24, n_jobs=1)
        parallel = run_monte_carlo(spec, kinds, 24, n_jobs=2)
        assert serial == parallel

    def test_rejection_count_is_integer(self):
        spec = ModelSpec(1, 30, 0.25, 23)
        kinds = [method_spec("unadjusted", 1, 30)]
        summary = run_monte_carlo(spec, kinds, 50)
        m = summary.methods[0]
        assert m.rejections == round(m.rejection_rate * m.replications)

    def test_se_reduction_is_relative_to_unadjusted(self):
        spec = ModelSpec(1, 30, 0.25, 29)
        kinds = [method_spec(m, 1, 30) for m in ("unadjusted", "pfe")]
        summary = run_monte_carlo(spec, kinds, 30)
        unadj = summary.by_method("unadjusted")
        pfe = summary.by_method("pfe")
        expected = 100.0 * (1.0 - pfe.mean_std_error / unadj.mean_std_error)
        assert pfe.se_reduction_pct == pytest.approx(expected, abs=1e-12)
        assert unadj.se_reduction_pct == 0.0

    def test_summary_rows_schema(self):
        spec = ModelSpec(14, 10, 0.0, 31)
        kinds = [method_spec(m, 14, 10) for m in default_methods(14)]
        summary = run_monte_carlo(spec, kinds, 2)
        rows = summary_rows(summary)
        assert [r["kind"] for r in rows] == ["unadjusted", "refit"]
        assert all(r["model_id"] == 14 and r["n"] == 10 for r in rows)
