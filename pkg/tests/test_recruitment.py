import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from censcov.errors import InvalidDates, MissingCovariate, RankDeficient, TrialSizeError
from censcov.imputation import ImputationConfig
from censcov.recruitment import (
    CENTERS,
    DAYS_PER_YEAR,
    PROGRESSION_TERMS,
    SYNTHETIC_THETA,
    DerivedTimes,
    Predictions,
    SubjectVisits,
    agreement,
    bootstrap_agreement,
    compare_models,
    cuhdrs,
    derive_times,
    fit_progression,
    impute_times,
    predict_change,
    predict_cohort,
    progression_design,
    rank_and_recruit,
    synthetic_cohort,
)
from censcov.regression import RegressionFit

D0 = dt.date(2005, 3, 1)


def visit(sid="A", follow_days=1826, dx_days=None, **kw):
    args = dict(subject_id=sid, first_visit_date=D0,
                last_visit_date=D0 + dt.timedelta(days=follow_days),
                diagnosis_date=None if dx_days is None else D0 + dt.timedelta(days=dx_days),
                age_at_first_visit=40.0, cag=42, cuhdrs_start=16.0, cuhdrs_end=15.0)
    args.update(kw)
    return SubjectVisits(**args)


def coef_fit(coef):
    k = len(coef)
    return RegressionFit(np.asarray(coef, dtype=float), 0.0, np.zeros((k, k)), np.zeros((k, k)),
                         0, ("intercept",) + PROGRESSION_TERMS, np.zeros(0))


def exact_progression_sample(rng, n, theta, sigma):
    t = rng.uniform(-5, 15, n)
    s = rng.normal(18, 3, n)
    age = rng.normal(40, 10, n)
    cag = rng.integers(38, 50, n).astype(float)
    y = theta[0] + progression_design(t, s, age, cag) @ theta[1:] + sigma * rng.normal(size=n)
    derived = DerivedTimes(tuple(range(n)), t + 5, np.ones(n, dtype=np.int8), np.full(n, 5.0),
                           t, age, cag, s, y, np.zeros(n, dtype=bool))
    return derived


class TestCuhdrs:
    def test_centers(self):
        assert cuhdrs(10.4, 29.7, 28.4, 66.1) == 10.0

    def test_tfc_unit(self):
        assert_allclose(cuhdrs(12.3, 29.7, 28.4, 66.1), 11.0)

    def test_tms_slope(self):
        assert_allclose(cuhdrs(11, 40.0, 30, 70) - cuhdrs(11, 40.0 + 14.9, 30, 70), 1.0)


class TestDeriveTimes:
    def test_diagnosis_at_last_visit(self):
        d = derive_times([visit(follow_days=1000, dx_days=1000)])
        assert d.delta[0] == 1
        assert_allclose(d.time_start, d.follow_up)
        assert d.time_end[0] == 0.0

    def test_undiagnosed(self):
        d = derive_times([visit(follow_days=1826)])
        assert d.delta[0] == 0
        assert_allclose(d.time_start, 1826 / DAYS_PER_YEAR)
        assert_allclose(d.time_start, 5.0, atol=1e-3)
        assert math.isnan(d.time_end[0])

    def test_negative_time_end(self):
        d = derive_times([visit(follow_days=round(5.0 * DAYS_PER_YEAR),
                                dx_days=round(3.2 * DAYS_PER_YEAR))])
        assert_allclose(d.time_end, -1.8, atol=2e-3)
        assert_allclose(d.time_end, d.time_start - d.follow_up)

    def test_invalid_dates(self):
        with pytest.raises(InvalidDates):
            visit(follow_days=0)
        with pytest.raises(InvalidDates):
            visit(follow_days=100, dx_days=200)
        with pytest.raises(InvalidDates):
            visit(first_visit_date="2005-13-01")

    def test_cag_threshold(self):
        with pytest.raises(ValueError):
            visit(cag=35)

    def test_iso_strings(self):
        v = visit(first_visit_date="2005-03-01", last_visit_date="2006-03-01")
        assert v.first_visit_date == D0

    def test_duplicate_ids(self):
        with pytest.raises(ValueError):
            derive_times([visit("A"), visit("A")])


class TestImputeTimes:
    @pytest.fixture(scope="class")
    @staticmethod
    def cohort():
        visits, truth = synthetic_cohort(n=300, seed=11)
        return derive_times(visits)

    def test_identity_without_censoring(self):
        d = derive_times([visit(str(i), follow_days=900 + 50 * i, dx_days=300 + 90 * i,
                                age_at_first_visit=30.0 + i, cag=40 + i % 4)
                          for i in range(8)])
        out, _ = impute_times(d)
        assert_allclose(out.time_start, d.time_start)
        assert not out.imputed.any()

    def test_constraints(self, cohort):
        out, result = impute_times(cohort)
        cens = cohort.censored
        assert np.all(out.imputed == cens)
        assert np.all(out.time_start[cens] > cohort.follow_up[cens])
        assert np.all(out.time_start <= 60.0)
        assert np.all(out.time_end[cens] > 0)
        assert_allclose(out.time_end, out.time_start - out.follow_up)
        assert result.config.upper_cap == 60.0

    def test_non_extrapolated_shorter(self, cohort):
        ext, _ = impute_times(cohort)
        non, _ = impute_times(cohort, ImputationConfig("non_extrapolated"))
        cens = cohort.censored
        assert non.time_start[cens].mean() < ext.time_start[cens].mean()

    def test_unknown_covariate(self, cohort):
        with pytest.raises(MissingCovariate):
            impute_times(cohort, covariates=("AGE", "SEX"))


class TestProgression:
    def test_recovers_theta(self):
        rng = np.random.default_rng(4)
        theta = np.array(SYNTHETIC_THETA)
        est = np.array([fit_progression(exact_progression_sample(rng, 400, theta, 1.0)).coef
                        for _ in range(60)])
        mc_se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
        assert np.all(np.abs(est.mean(axis=0) - theta) <= 3 * mc_se)

    def test_names(self):
        rng = np.random.default_rng(0)
        fit = fit_progression(exact_progression_sample(rng, 50, np.array(SYNTHETIC_THETA), 1.0))
        assert fit.names == ("intercept",) + PROGRESSION_TERMS

    def test_constant_start_score(self):
        rng = np.random.default_rng(0)
        d = exact_progression_sample(rng, 50, np.array(SYNTHETIC_THETA), 1.0)
        with pytest.raises(RankDeficient):
            fit_progression(d.replace(cuhdrs_start=np.full(d.n, 23.8)))

    def test_needs_imputation(self):
        d = derive_times([visit("A"), visit("B", dx_days=400)])
        with pytest.raises(ValueError):
            fit_progression(d)


class TestPredict:
    STATE = {"TIME_end": 5.0, "cUHDRS": 13.3, "AGE": 40.0, "CAG": 43.0}

    def test_identity_progression(self):
        fit = coef_fit([CENTERS["cUHDRS_start"], 0, 1, 0, 0, 0, 0])
        assert_allclose(predict_change(fit, self.STATE, 2.0), 0.0, atol=1e-12)

    def test_dot_product_oracle(self):
        theta = [21.680, 0.084, 1.048, -0.024, -0.021, -0.089, 0.006]
        fit = coef_fit(theta)
        t, s, a, c = 3.0, 13.3 - 23.8, 40 - 18, 43 - 36
        end = (theta[0] + theta[1] * t + theta[2] * s + theta[3] * t * s + theta[4] * a
               + theta[5] * c + theta[6] * a * c)
        state = dict(self.STATE, TIME_end=5.0)
        assert_allclose(predict_change(fit, state, 2.0), end - 13.3, rtol=1e-13)

    def test_longer_horizon_lowers_prediction(self):
        fit = coef_fit([20.0, 0.3, 1.0, -0.05, 0, 0, 0])
        state = dict(self.STATE, cUHDRS=26.0)
        d2 = predict_change(fit, state, 2.0)
        d4 = predict_change(fit, state, 4.0)
        assert_allclose(d2 - d4, 2 * (0.3 - 0.05 * (26.0 - 23.8)), rtol=1e-12)
        assert d4 < d2

    def test_missing_covariate(self):
        with pytest.raises(MissingCovariate):
            predict_change(coef_fit([0] * 7), {"TIME_end": 1.0, "cUHDRS": 10.0, "AGE": 30.0})

    def test_cohort_matches_single(self):
        visits, _ = synthetic_cohort(n=120, seed=3)
        d, _ = impute_times(derive_times(visits))
        fit = fit_progression(d)
        pred = predict_cohort(fit, d, 2.0)
        i = int(np.flatnonzero(d.censored)[5])
        state = {"TIME_end": d.time_end[i], "cUHDRS": d.cuhdrs_end[i], "AGE": d.age[i],
                 "CAG": d.cag[i]}
        assert_allclose(pred.delta_hat[5], predict_change(fit, state, 2.0), rtol=1e-12)
        assert len(pred) == d.censored.sum()


def preds(deltas, ids=None):
    ids = tuple(ids or range(1, len(deltas) + 1))
    return Predictions(ids, np.zeros(len(deltas)), np.asarray(deltas, dtype=float))


class TestRanking:
    def test_example(self):
        lst = rank_and_recruit(preds([-2.5, -1.5, -3.0]), 2)
        assert [r.subject_id for r in lst.recruited] == [3, 1]
        assert [r.rank for r in lst.ranked] == [1, 2, 3]

    def test_empty_trial(self):
        assert rank_and_recruit(preds([-1.0, 2.0]), 0).recruited == ()

    def test_too_large(self):
        with pytest.raises(TrialSizeError):
            rank_and_recruit(preds([-1.0]), 2)

    def test_ties_by_id(self):
        lst = rank_and_recruit(preds([-1.0, -1.0, -1.0], ids=["c", "a", "b"]), 2)
        assert [r.subject_id for r in lst.recruited] == ["a", "b"]

    # values on a 1/8 grid so the transform stays strictly monotone in floating point
    @given(deltas=st.lists(st.integers(-400, 400).map(lambda i: i / 8), min_size=1,
                           max_size=40),
           k=st.integers(0, 40), seed=st.integers(0, 1000))
    def test_monotone_transform_and_permutation(self, deltas, k, seed):
        k = min(k, len(deltas))
        base = rank_and_recruit(preds(deltas), k)
        warped = rank_and_recruit(preds(np.arctan(np.asarray(deltas) / 7) * 3 + 1), k)
        assert base.recruited_ids == warped.recruited_ids
        perm = np.random.default_rng(seed).permutation(len(deltas))
        ids = [i + 1 for i in perm]
        shuffled = rank_and_recruit(preds(np.asarray(deltas)[perm], ids), k)
        assert shuffled.recruited_ids == base.recruited_ids


class TestAgreement:
    def test_counts(self):
        a = rank_and_recruit(preds([-3, -2, -1, 0, 1]), 2)
        b = rank_and_recruit(preds([-3, 0, -2, -1, 1]), 2)
        ag = agreement(a, b)
        assert (ag.agree_recruit, ag.agree_not, ag.only_a, ag.only_b) == (1, 2, 1, 1)
        assert ag.total == 5

    def test_different_candidates(self):
        with pytest.raises(ValueError):
            agreement(rank_and_recruit(preds([1.0, 2.0]), 1),
                      rank_and_recruit(preds([1.0, 2.0], ids=[7, 8]), 1))

    def test_self_comparison(self):
        visits, _ = synthetic_cohort(n=200, seed=9)
        d, _ = impute_times(derive_times(visits))
        fit = fit_progression(d)
        boot = bootstrap_agreement(fit, fit, d, n_resamples=10, trial_size=40)
        assert np.all(boot.counts[:, 2:] == 0)

    def test_bootstrap_deterministic_partition(self):
        visits, _ = synthetic_cohort(n=200, seed=9)
        res = compare_models(visits, trial_size=40)
        args = (res.fits["extrapolated"], res.fits["non_extrapolated"],
                res.imputed["extrapolated"], res.imputed["non_extrapolated"])
        a = bootstrap_agreement(*args, n_resamples=8, trial_size=40, seed=5)
        b = bootstrap_agreement(*args, n_resamples=8, trial_size=40, seed=5)
        assert np.array_equal(a.counts, b.counts)
        m = int(res.derived.censored.sum())
        assert np.all(a.counts.sum(axis=1) == m)
        assert np.all(a.counts[:, 0] + a.counts[:, 2] == 40)


class TestSyntheticCohort:
    def test_shape(self):
        visits, truth = synthetic_cohort()
        d = derive_times(visits)
        assert d.n == 970
        assert abs(d.delta.mean() - 0.25) < 0.04
        assert np.all(truth <= 60.0)
        assert np.all(d.cag >= 36)

    def test_deterministic(self):
        assert synthetic_cohort(n=50, seed=1)[0] == synthetic_cohort(n=50, seed=1)[0]
