import csv
import math

import numpy as np
import pytest
from scipy.special import expit

from pathfx.core import DesignSpec
from pathfx.glm import Family, fit_ols
from pathfx.nuisance import (
    ROLE_MEDIATOR,
    ROLE_OUTCOME,
    ROLE_PROP_BASE,
    ROLE_PROP_BASE_IN_C1_RATIO,
    ROLE_PROP_C1,
    ROLE_PROP_C1_IN_M_RATIO,
    ROLE_PROP_M,
    c1_mean_role,
)
from pathfx.simulation import (
    SimulationError,
    SimulationSpec,
    closed_form_beta0,
    closed_form_delta0,
    draw_dataset,
    oracle_beta0_mc,
    oracle_delta0_mc,
    oracle_nested_mean_mc,
    run_monte_carlo,
    truth,
    working_models_for,
    write_replicates_csv,
    write_summary_csv,
)


class TestDrawDataset:
    def test_deterministic_and_stream_separated(self):
        a = draw_dataset(500, 7)
        b = draw_dataset(500, 7)
        c = draw_dataset(500, 8)
        d = draw_dataset(500, 7, rep=1)
        assert np.array_equal(a.y, b.y) and np.array_equal(a.c1, b.c1)
        assert not np.array_equal(a.y, c.y)
        assert not np.array_equal(a.y, d.y)

    def test_baseline_covariate_moments(self):
        n = 1_000_000
        ds = draw_dataset(n, 10)
        c0 = ds.c0[:, 0]
        sd = 2.0 / math.sqrt(12.0)
        assert abs(c0.mean() - 1.0) < 3 * sd / math.sqrt(n)
        assert c0.min() >= 0.0 and c0.max() <= 2.0

    def test_treatment_probability_near_zero_covariate(self):
        ds = draw_dataset(4_000_000, 11)
        mask = ds.c0[:, 0] < 0.01
        share = ds.e[mask].mean()
        n = int(mask.sum())
        want = expit(0.9)
        assert n > 10_000
        assert abs(share - want) < 3 * math.sqrt(want * (1 - want) / n)

    def test_outcome_equation_recovered_by_ols(self):
        n = 1_000_000
        ds = draw_dataset(n, 12)
        spec = DesignSpec.parse("1, c0_1, e, c1_1, c1_2, c1_3, m, e*m")
        from pathfx.core import build_design_matrix

        X = build_design_matrix(ds, spec)
        fit = fit_ols(X, ds.y)
        resid = ds.y - X @ fit.coef
        sigma2 = float(resid @ resid) / (n - X.shape[1])
        se = np.sqrt(sigma2 * np.diag(np.linalg.inv(X.T @ X)))
        want = np.array([0.2, 0.2, 0.6, 1.0, 0.7, 0.3, -0.9, -0.8])
        assert np.all(np.abs(fit.coef - want) < 3 * se)

    def test_rejects_empty(self):
        with pytest.raises(SimulationError):
            draw_dataset(0, 1)


class TestTruth:
    def test_closed_forms(self):
        assert closed_form_beta0() == pytest.approx(2.678, abs=1e-12)
        assert closed_form_delta0() == pytest.approx(3.596, abs=1e-12)

    def test_nested_mean_line(self):
        c0 = np.array([0.0, 1.0, 2.0])
        assert truth.b_doubleprime(c0) == pytest.approx(1.447 + 1.231 * c0, abs=1e-12)

    def test_baseline_mean_line(self):
        c0 = np.array([0.0, 1.0, 2.0])
        assert truth.marginal_outcome(c0, 0) == pytest.approx(2.005 + 1.591 * c0, abs=1e-12)

    def test_inverted_propensity_coefficients_reproduce_density_ratios(self):
        # the coefficient expansions must match the analytic normal ratios
        rng = np.random.default_rng(5)
        n = 200
        c0 = rng.uniform(0, 2, n)
        c1 = rng.standard_normal((n, 3)) * 2.0
        m = rng.standard_normal(n) * 2.0
        from pathfx.core import build_design_matrix, dataset_from_arrays
        from pathfx.simulation import PROP_C1_CORRECT, PROP_M_CORRECT

        ds = dataset_from_arrays(c0[:, None], np.zeros(n, dtype=int), c1, m, np.zeros(n))
        Xl = build_design_matrix(ds, DesignSpec.parse(PROP_C1_CORRECT))
        Xg = build_design_matrix(ds, DesignSpec.parse(PROP_M_CORRECT))
        # Bayes: logit P(E=1|c1,c0) - logit P(E=1|c0) = log c1-density ratio
        log_c1_ratio = Xl @ truth.prop_c1_coef() - (0.9 + 0.3 * c0)
        assert np.max(np.abs(log_c1_ratio - np.log(truth.c1_ratio(c1, c0)))) < 1e-10
        log_m_ratio = Xg @ truth.prop_m_coef() - Xl @ truth.prop_c1_coef()
        assert np.max(np.abs(log_m_ratio - np.log(truth.m_ratio(m, c1, c0)))) < 1e-10


class TestOracles:
    def test_beta0_monte_carlo(self):
        est = oracle_beta0_mc(1_000_000, 3)
        assert abs(est.value - closed_form_beta0()) < 3 * est.se
        assert est.se < 0.01

    def test_delta0_monte_carlo(self):
        est = oracle_delta0_mc(1_000_000, 3)
        assert abs(est.value - closed_form_delta0()) < 3 * est.se

    def test_collapse_to_baseline_mean(self):
        a = oracle_nested_mean_mc(200_000, 9, mediator_level=0, stream=1)
        b = oracle_delta0_mc(200_000, 9)
        assert a.value == b.value  # same construction once the mediator arm matches

    def test_effect_difference(self):
        beta = oracle_beta0_mc(2_000_000, 4)
        delta = oracle_delta0_mc(2_000_000, 4)
        se = math.hypot(beta.se, delta.se)
        assert abs((beta.value - delta.value) - (-0.918)) < 3 * se

    def test_ipw_identity_under_true_law(self):
        ds = draw_dataset(2_000_000, 13)
        w = (ds.e == 0) / (1 - truth.propensity(ds.c0))
        est = float(np.mean(w * ds.y))
        sd = float(np.std(w * ds.y, ddof=1))
        assert abs(est - closed_form_delta0()) < 3 * sd / math.sqrt(ds.n)


class TestRegimeRegistry:
    def test_intersection_all_correct(self):
        models = working_models_for("int")
        ws = models.working_set
        assert ws[ROLE_OUTCOME].design.labels == ("1", "c0_1", "e", "c1_1", "c1_2", "c1_3", "m", "e*m")
        assert ws[ROLE_MEDIATOR].design.labels == ("1", "c0_1", "e", "c1_1", "c1_2", "c1_3", "e*c1_1")
        assert ws[c1_mean_role(1)].design.labels == ("1", "c0_1", "e", "c0_1*e")
        assert ws[ROLE_PROP_BASE].family is Family.LOGIT
        assert ROLE_PROP_BASE_IN_C1_RATIO not in ws
        assert ROLE_PROP_C1_IN_M_RATIO not in ws
        assert all(models.correct.values())

    def test_regime_a_breaks_outcome_and_covariate_models(self):
        ws = working_models_for("a").working_set
        assert ws[ROLE_OUTCOME].design.labels == ("1", "c0_1", "e", "c1_1", "c1_2", "c1_3", "m")
        assert ws[c1_mean_role(2)].design.labels == ("1", "c0_1", "e")
        assert ws[ROLE_PROP_C1].design.labels == ("1", "c0_1", "c1_1", "c1_2", "c1_3")
        # the mediator ratio keeps the correct covariate propensity internally
        assert ws[ROLE_PROP_C1_IN_M_RATIO].design.labels[:3] == ("1", "c0_1", "c0_1^2")
        assert ws[ROLE_MEDIATOR].design.labels[-1] == "e*c1_1"

    def test_regime_b_breaks_mediator_models(self):
        ws = working_models_for("b").working_set
        assert ws[ROLE_MEDIATOR].design.labels == ("1", "c0_1", "e", "c1_1", "c1_2", "c1_3")
        assert ws[ROLE_PROP_M].design.labels == ("1", "c0_1", "c1_1", "c1_2", "c1_3", "m")
        assert ws[ROLE_OUTCOME].design.labels[-1] == "e*m"

    def test_regime_c_swaps_the_base_propensity_link(self):
        ws = working_models_for("c").working_set
        base = ws[ROLE_PROP_BASE]
        assert base.family is Family.LOGIT and base.predict_family is Family.PROBIT
        ratio_base = ws[ROLE_PROP_BASE_IN_C1_RATIO]
        assert ratio_base.family is Family.LOGIT and ratio_base.predict_family is None

    def test_unknown_regime(self):
        with pytest.raises(SimulationError, match="regime"):
            working_models_for("z")


class TestMonteCarloRunner:
    def test_report_shape_and_determinism(self):
        spec = SimulationSpec(regime="int", n=400, replications=25, seed=5)
        a = run_monte_carlo(spec)
        b = run_monte_carlo(spec)
        assert [s.kind for s in a.summaries] == ["mle", "a", "b", "mr"]
        for k in a.values:
            assert np.array_equal(a.values[k], b.values[k])
        assert a.n_failed == 0

    def test_threads_do_not_change_values(self):
        spec = SimulationSpec(regime="int", n=300, replications=16, seed=6)
        a = run_monte_carlo(spec, threads=1)
        b = run_monte_carlo(spec, threads=4)
        for k in a.values:
            assert np.array_equal(a.values[k], b.values[k])

    def test_sequential_estimator_supported(self):
        spec = SimulationSpec(regime="int", n=400, replications=10, seed=7)
        rep = run_monte_carlo(spec, estimators=("mr_seq",))
        assert rep.summaries[0].kind == "mr_seq"
        assert np.all(np.isfinite(rep.values["mr_seq"]))

    def test_se_scales_with_sample_size(self):
        # quadrupling n halves the spread; the two weighted estimators are
        # heavy-tailed below n=1000 and only enter the band on the larger pair
        sds = {}
        for n in (250, 1000, 4000):
            rep = run_monte_carlo(SimulationSpec(regime="int", n=n, replications=300, seed=111))
            sds[n] = {s.kind: s.mc_se * math.sqrt(300) for s in rep.summaries}
        for kind in ("mle", "mr"):
            assert 0.4 < sds[1000][kind] / sds[250][kind] < 0.6, kind
            assert 0.4 < sds[4000][kind] / sds[1000][kind] < 0.6, kind
        for kind in ("a", "b"):
            assert 0.4 < sds[4000][kind] / sds[1000][kind] < 0.6, kind

    def test_unknown_estimator_rejected(self):
        with pytest.raises(SimulationError, match="estimator"):
            run_monte_carlo(SimulationSpec(regime="int", n=100, replications=5, seed=1), estimators=("x",))


class TestCsvOutputs:
    def test_replicates_and_summary_round_trip(self, tmp_path):
        rep = run_monte_carlo(SimulationSpec(regime="int", n=300, replications=12, seed=9))
        rpath = tmp_path / "replicates.csv"
        spath = tmp_path / "summary.csv"
        write_replicates_csv(rep, rpath)
        write_summary_csv(rep, spath)
        with open(rpath) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 12 * 4
        got = np.array([float(r["value"]) for r in rows if r["estimator"] == "mle"])
        assert np.array_equal(got, rep.values["mle"])
        with open(spath) as fh:
            srows = list(csv.DictReader(fh))
        assert [r["estimator"] for r in srows] == ["mle", "a", "b", "mr"]
        mle_row = srows[0]
        assert float(mle_row["mc_mean"]) == rep.summaries[0].mc_mean
