import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from censcov import simulation
from censcov.errors import NoEvents, ScenarioFailed
from censcov.simulation import (
    CENSORING_TARGETS,
    ScenarioConfig,
    generate_dataset,
    run_replicate,
    run_scenario,
    scenario,
)


class TestGenerate:
    def test_deterministic_per_replicate(self):
        cfg = scenario("weibull-heavy-n100")
        a, xa = generate_dataset(cfg, 3)
        b, xb = generate_dataset(cfg, 3)
        assert_allclose(a.w, b.w, rtol=0)
        assert_allclose(xa, xb, rtol=0)
        c, _ = generate_dataset(cfg, 4)
        assert not np.array_equal(a.w, c.w)

    def test_w_is_min(self):
        data, x = generate_dataset(scenario("lognormal-moderate-n500"), 0)
        assert np.all(data.w <= x)
        assert np.array_equal(data.delta == 1, data.w == x)

    def test_no_censoring_limit(self):
        data, _ = generate_dataset(scenario("weibull-light-n500", censor_rate=1e-9), 0)
        assert data.delta.mean() > 0.995

    @pytest.mark.parametrize("family,level", [(f, lv) for f in CENSORING_TARGETS
                                              for lv in CENSORING_TARGETS[f]])
    def test_censoring_near_target(self, family, level):
        rate, target = CENSORING_TARGETS[family][level]
        data, _ = generate_dataset(scenario(f"{family}-{level}-n2000"), 0)
        assert abs((1 - data.delta.mean()) - target) <= 0.04

    def test_outcome_model(self):
        cfg = ScenarioConfig(n=20000, sigma=1e-9)
        data, x = generate_dataset(cfg, 0)
        assert_allclose(data.y, 1.0 + 0.5 * x + 0.25 * data.z[:, 0], atol=1e-6)

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            ScenarioConfig(censor_rate=0.0)
        with pytest.raises(ValueError):
            ScenarioConfig(x_family="gamma")
        with pytest.raises(KeyError):
            scenario("weibull-medium-n500")


class TestRunScenario:
    def test_single_replicate(self):
        cfg = scenario("weibull-light-n100", replicates=1)
        s = run_scenario(cfg)
        rep = run_replicate(cfg, 0)
        for j, param in enumerate(("alpha", "beta", "gamma")):
            for m in ("full_cohort", "extrapolated", "non_extrapolated"):
                row = s.row(param, m)
                assert math.isnan(row.se) and math.isnan(row.relative_efficiency)
                assert_allclose(row.bias, rep[m][j] - cfg.truth[param])

    def test_deterministic_and_parallel_invariant(self):
        cfg = scenario("weibull-heavy-n100", replicates=6)
        a = run_scenario(cfg)
        b = run_scenario(cfg)
        c = run_scenario(cfg, workers=2)
        assert a.rows == b.rows == c.rows
        for m in a.estimates:
            assert np.array_equal(a.estimates[m], c.estimates[m])

    def test_summary_definitions(self):
        s = run_scenario(scenario("weibull-heavy-n100", replicates=20))
        for param in ("alpha", "beta", "gamma"):
            assert s.row(param, "full_cohort").relative_efficiency == 1.0
            j = ("alpha", "beta", "gamma").index(param)
            full = s.estimates["full_cohort"][:, j]
            ext = s.estimates["extrapolated"][:, j]
            row = s.row(param, "extrapolated")
            assert_allclose(row.relative_efficiency, np.var(full, ddof=1) / np.var(ext, ddof=1))
            assert_allclose(row.se, np.std(ext, ddof=1))
            truth = s.config.truth[param]
            assert_allclose(row.percent_bias, 100 * (ext.mean() - truth) / truth)
        assert 0.0 <= s.extension_convergence_rate <= 1.0

    def test_full_cohort_unbiased(self):
        s = run_scenario(scenario("lognormal-light-n100", replicates=150))
        row = s.row("beta", "full_cohort")
        assert abs(row.bias) <= 3 * row.se / math.sqrt(150)

    def test_every_replicate_failing(self, monkeypatch):
        def broken(*args, **kwargs):
            raise NoEvents("forced")
        monkeypatch.setattr(simulation, "impute_dataset", broken)
        with pytest.raises(ScenarioFailed):
            run_scenario(scenario("weibull-light-n100", replicates=3))

    def test_partial_failures_are_counted(self, monkeypatch):
        real = simulation.impute_dataset

        def flaky(data, cfg):
            if cfg.approach == "non_extrapolated":
                raise NoEvents("forced")
            return real(data, cfg)
        monkeypatch.setattr(simulation, "impute_dataset", flaky)
        s = run_scenario(scenario("weibull-light-n100", replicates=3))
        assert s.n_failed["non_extrapolated"] == 3
        assert s.row("beta", "non_extrapolated").n_used == 0
        assert math.isnan(s.bias("beta", "non_extrapolated"))
