"""Time-to-diagnosis imputation and rank-based trial recruitment.

The pipeline runs on one row per subject (first and last study visit):

1. :func:`derive_times` turns visit dates into ``TIME_start`` (first visit to
   diagnosis, right-censored at ``FOLLOW_UP`` for undiagnosed subjects).
2. :func:`impute_times` replaces censored ``TIME_start`` by its conditional
   mean given ``AGE`` and ``CAG`` and sets ``TIME_end = TIME_start - FOLLOW_UP``.
3. :func:`fit_progression` fits the symptom progression model

       cUHDRS_end ~ TIME_end + cUHDRS_start + TIME_end:cUHDRS_start
                    + AGE + CAG + AGE:CAG

   with ``AGE``, ``CAG`` and ``cUHDRS_start`` centered at 18, 36 and 23.8.
4. :func:`predict_change` projects each subject ``horizon`` years past their
   last visit, and :func:`rank_and_recruit` recruits the steepest predicted
   decliners.

Times are in years of 365.25 days. ``TIME_end`` is positive when diagnosis
falls after the last visit and negative when it happened during follow-up.
"""

from dataclasses import dataclass, field
import datetime as _dt
import math

import numpy as np

from .cox import CensoredData
from .errors import InvalidDates, MissingCovariate, TrialSizeError
from .imputation import ImputationConfig, impute_dataset
from .regression import fit_ols

__all__ = [
    "CENTERS",
    "DAYS_PER_YEAR",
    "PROGRESSION_TERMS",
    "Agreement",
    "BootstrapAgreement",
    "DerivedTimes",
    "ModelComparison",
    "Predictions",
    "RecruitmentList",
    "SubjectVisits",
    "agreement",
    "bootstrap_agreement",
    "compare_models",
    "cuhdrs",
    "derive_times",
    "fit_progression",
    "impute_times",
    "predict_change",
    "predict_cohort",
    "progression_design",
    "rank_and_recruit",
    "synthetic_cohort",
]

DAYS_PER_YEAR = 365.25
CENTERS = {"AGE": 18.0, "CAG": 36.0, "cUHDRS_start": 23.8}
PROGRESSION_TERMS = ("TIME_end", "cUHDRS_start", "TIME_end:cUHDRS_start",
                     "AGE", "CAG", "AGE:CAG")
MAX_YEARS = 60.0


def cuhdrs(tfc, tms, sdmt, swr):
    """Composite UHDRS from total functional capacity, total motor score,
    symbol digit modalities and Stroop word reading."""
    return ((tfc - 10.4) / 1.9 - (tms - 29.7) / 14.9 + (sdmt - 28.4) / 11.3
            + (swr - 66.1) / 20.1 + 10.0)


def _as_date(value, name):
    if value is None or isinstance(value, _dt.date):
        return value
    try:
        return _dt.date.fromisoformat(str(value))
    except ValueError:
        raise InvalidDates(f"{name}: cannot parse {value!r} as an ISO date")


@dataclass(frozen=True)
class SubjectVisits:
    """First and last study visit of one at-risk subject.

    ``age_at_first_visit`` and ``cag`` are baseline values; ``cuhdrs_start`` and
    ``cuhdrs_end`` are the scores at the first and last visit.
    """

    subject_id: str
    first_visit_date: _dt.date
    last_visit_date: _dt.date
    diagnosis_date: _dt.date = None
    age_at_first_visit: float = math.nan
    cag: int = 36
    cuhdrs_start: float = math.nan
    cuhdrs_end: float = math.nan

    def __post_init__(self):
        for name in ("first_visit_date", "last_visit_date", "diagnosis_date"):
            object.__setattr__(self, name, _as_date(getattr(self, name), name))
        if self.first_visit_date is None or self.last_visit_date is None:
            raise InvalidDates(f"subject {self.subject_id}: visit dates are required")
        if not self.last_visit_date > self.first_visit_date:
            raise InvalidDates(
                f"subject {self.subject_id}: last visit must follow the first visit")
        dx = self.diagnosis_date
        if dx is not None and not (self.first_visit_date <= dx <= self.last_visit_date):
            raise InvalidDates(
                f"subject {self.subject_id}: diagnosis date outside the follow-up window")
        if self.cag < 36:
            raise ValueError(f"subject {self.subject_id}: CAG {self.cag} is below 36")
        for name in ("age_at_first_visit", "cuhdrs_start", "cuhdrs_end"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"subject {self.subject_id}: {name} must be finite")


@dataclass(frozen=True)
class DerivedTimes:
    """Per-subject times (years) and model covariates, as parallel arrays.

    ``time_start`` holds the observed value (``follow_up`` when censored) until
    :func:`impute_times` replaces it; ``time_end`` is NaN for censored subjects
    that have not been imputed yet.
    """

    subject_id: tuple
    time_start: np.ndarray
    delta: np.ndarray
    follow_up: np.ndarray
    time_end: np.ndarray
    age: np.ndarray
    cag: np.ndarray
    cuhdrs_start: np.ndarray
    cuhdrs_end: np.ndarray
    imputed: np.ndarray

    @property
    def n(self):
        return len(self.subject_id)

    @property
    def censored(self):
        return self.delta == 0

    def replace(self, **changes):
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(changes)
        return DerivedTimes(**kw)

    def take(self, index):
        index = np.asarray(index)
        kw = {}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            kw[k] = tuple(v[i] for i in index) if k == "subject_id" else v[index]
        return DerivedTimes(**kw)


def _years(d1, d0):
    return (d1 - d0).days / DAYS_PER_YEAR


def derive_times(visits):
    """Time to diagnosis from the first visit, censored for undiagnosed subjects."""
    visits = list(visits)
    n = len(visits)
    ids = tuple(v.subject_id for v in visits)
    if len(set(ids)) != n:
        raise ValueError("subject ids must be unique")
    follow = np.array([_years(v.last_visit_date, v.first_visit_date) for v in visits])
    delta = np.array([v.diagnosis_date is not None for v in visits], dtype=np.int8)
    start = np.array([
        _years(v.diagnosis_date, v.first_visit_date) if v.diagnosis_date else f
        for v, f in zip(visits, follow)
    ]).reshape(n)
    end = np.where(delta == 1, start - follow, np.nan)
    return DerivedTimes(
        subject_id=ids,
        time_start=start,
        delta=delta,
        follow_up=follow,
        time_end=end,
        age=np.array([v.age_at_first_visit for v in visits], dtype=float),
        cag=np.array([v.cag for v in visits], dtype=float),
        cuhdrs_start=np.array([v.cuhdrs_start for v in visits], dtype=float),
        cuhdrs_end=np.array([v.cuhdrs_end for v in visits], dtype=float),
        imputed=np.zeros(n, dtype=bool),
    )


def _imputation_covariates(derived, covariates):
    cols = {"AGE": derived.age - CENTERS["AGE"], "CAG": derived.cag - CENTERS["CAG"]}
    try:
        return np.column_stack([cols[c] for c in covariates]) if covariates else \
            np.zeros((derived.n, 0))
    except KeyError as exc:
        raise MissingCovariate(f"unknown imputation covariate {exc.args[0]!r}")


def impute_times(derived, config=None, covariates=("AGE", "CAG")):
    """Replace censored ``TIME_start`` by ``E(TIME_start | TIME_start > FOLLOW_UP, AGE, CAG)``.

    The default configuration is the extrapolated approach with a Weibull tail
    and a 60-year cap. Covariates enter the survival model centered like the
    progression model; this leaves the conditional survival unchanged.

    Returns
    -------
    DerivedTimes
        With ``time_start``, ``time_end`` and ``imputed`` updated.
    ImputedDataset
        The underlying imputation result, for diagnostics.
    """
    if config is None:
        config = ImputationConfig(upper_cap=MAX_YEARS)
    z = _imputation_covariates(derived, covariates)
    data = CensoredData(derived.cuhdrs_end, derived.time_start, derived.delta, z)
    result = impute_dataset(data, config)
    start = result.data.w.copy()
    imputed = np.asarray(result.diagnostics.imputed).copy()
    end = np.where(derived.delta == 1, derived.time_start - derived.follow_up, np.nan)
    end[imputed] = start[imputed] - derived.follow_up[imputed]
    return derived.replace(time_start=start, time_end=end, imputed=imputed), result


def progression_design(time_end, cuhdrs_start, age, cag):
    """Centered regressors of the progression model, in ``PROGRESSION_TERMS`` order."""
    t = np.asarray(time_end, dtype=float)
    s = np.asarray(cuhdrs_start, dtype=float) - CENTERS["cUHDRS_start"]
    a = np.asarray(age, dtype=float) - CENTERS["AGE"]
    c = np.asarray(cag, dtype=float) - CENTERS["CAG"]
    return np.column_stack(np.broadcast_arrays(t, s, t * s, a, c, a * c))


def fit_progression(derived, sandwich_kind="HC0"):
    """OLS fit of ``cUHDRS_end`` on the progression design.

    Raises
    ------
    ValueError
        Some censored subject still lacks a ``TIME_end``.
    RankDeficient
        E.g. a constant ``cUHDRS_start`` column.
    """
    if np.any(~np.isfinite(derived.time_end)):
        raise ValueError("TIME_end is missing for some subjects; impute first")
    X = progression_design(derived.time_end, derived.cuhdrs_start, derived.age, derived.cag)
    return fit_ols(derived.cuhdrs_end, X, names=PROGRESSION_TERMS, sandwich_kind=sandwich_kind)


_STATE_KEYS = ("TIME_end", "cUHDRS", "AGE", "CAG")


def _predicted_end(coef, time_end, score, age, cag):
    X = progression_design(time_end, score, age, cag)
    return coef[0] + X @ coef[1:]


def predict_change(fit, state, horizon=2.0):
    """Expected cUHDRS change over a trial of ``horizon`` years.

    Parameters
    ----------
    fit : RegressionFit
        Result of :func:`fit_progression`.
    state : mapping
        The subject at recruitment: ``TIME_end`` (years from now to diagnosis),
        ``cUHDRS`` (current score), ``AGE`` and ``CAG`` (baseline values, kept
        as fitted).
    horizon : float
        Trial length; at trial end the subject is ``horizon`` years closer to
        diagnosis.

    Returns
    -------
    float
        ``cUHDRS_end_hat - cUHDRS``; negative values mean expected decline.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    missing = [k for k in _STATE_KEYS if k not in state or state[k] is None]
    if missing:
        raise MissingCovariate(f"subject state lacks {', '.join(missing)}")
    score = float(state["cUHDRS"])
    end = _predicted_end(fit.coef, float(state["TIME_end"]) - horizon, score,
                         float(state["AGE"]), float(state["CAG"]))
    return float(end[0] - score)


@dataclass(frozen=True)
class Predictions:
    subject_id: tuple
    predicted_end: np.ndarray
    delta_hat: np.ndarray

    def __len__(self):
        return len(self.subject_id)


def predict_cohort(fit, derived, horizon=2.0, censored_only=True):
    """Vectorized :func:`predict_change` for every (censored) subject.

    The current score is the last-visit ``cUHDRS_end``; ``TIME_end`` is shifted
    by ``-horizon``.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    sel = np.flatnonzero(derived.censored) if censored_only else np.arange(derived.n)
    sub = derived.take(sel)
    if np.any(~np.isfinite(sub.time_end)):
        raise MissingCovariate("TIME_end is missing for some subjects; impute first")
    score = sub.cuhdrs_end
    end = _predicted_end(fit.coef, sub.time_end - horizon, score, sub.age, sub.cag)
    return Predictions(sub.subject_id, end, end - score)


@dataclass(frozen=True)
class RankedSubject:
    subject_id: object
    predicted_end: float
    delta_hat: float
    rank: int


@dataclass(frozen=True)
class RecruitmentList:
    """Candidates ordered by predicted change, steepest decline first."""

    ranked: tuple
    trial_size: int
    horizon_years: float

    @property
    def recruited(self):
        return self.ranked[: self.trial_size]

    @property
    def recruited_ids(self):
        return frozenset(r.subject_id for r in self.recruited)

    @property
    def candidate_ids(self):
        return frozenset(r.subject_id for r in self.ranked)


def rank_and_recruit(predictions, trial_size=200, horizon=2.0):
    """Sort by ascending ``delta_hat`` (ties by subject id) and take the first
    ``trial_size``.

    Raises
    ------
    TrialSizeError
        ``trial_size`` exceeds the number of candidates.
    """
    n = len(predictions)
    if trial_size < 0:
        raise ValueError("trial_size must be non-negative")
    if trial_size > n:
        raise TrialSizeError(f"trial size {trial_size} exceeds the {n} candidates")
    delta = np.asarray(predictions.delta_hat, dtype=float)
    end = np.asarray(predictions.predicted_end, dtype=float)
    order = sorted(range(n), key=lambda i: (delta[i], predictions.subject_id[i]))
    ranked = tuple(
        RankedSubject(predictions.subject_id[i], float(end[i]), float(delta[i]), r + 1)
        for r, i in enumerate(order)
    )
    return RecruitmentList(ranked, int(trial_size), float(horizon))


@dataclass(frozen=True)
class Agreement:
    """How two recruitment lists over the same candidates overlap."""

    agree_recruit: int
    agree_not: int
    only_a: int
    only_b: int

    @property
    def total(self):
        return self.agree_recruit + self.agree_not + self.only_a + self.only_b

    @property
    def disagree(self):
        return self.only_a + self.only_b


def agreement(list_a, list_b):
    if list_a.candidate_ids != list_b.candidate_ids:
        raise ValueError("recruitment lists rank different candidates")
    a, b = list_a.recruited_ids, list_b.recruited_ids
    both = len(a & b)
    return Agreement(both, len(list_a.candidate_ids) - len(a | b), len(a - b), len(b - a))


@dataclass(frozen=True)
class BootstrapAgreement:
    counts: np.ndarray = field(repr=False)  # (resamples, 4): recruit, not, only_a, only_b

    @property
    def mean(self):
        return Agreement(*(float(v) for v in self.counts.mean(axis=0)))


def bootstrap_agreement(fit_a, fit_b, derived_a, derived_b=None, n_resamples=100,
                        trial_size=200, horizon=2.0, seed=2024):
    """Resample censored subjects with replacement and compare the two models'
    recruitment lists in each resample.

    ``derived_a`` and ``derived_b`` carry the ``TIME_end`` each model was fit
    with (its own imputation); ``derived_b`` defaults to ``derived_a``.

    Each resample has as many rows as there are censored subjects. Repeated
    draws of the same subject are kept apart by their position, which also
    breaks ties between them.
    """
    if derived_b is None:
        derived_b = derived_a
    pa = predict_cohort(fit_a, derived_a, horizon)
    pb = predict_cohort(fit_b, derived_b, horizon)
    if pa.subject_id != pb.subject_id:
        raise ValueError("the two models must be compared on the same censored subjects")
    m = len(pa)
    counts = np.zeros((n_resamples, 4), dtype=np.int64)
    for r in range(n_resamples):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, r])))
        idx = rng.integers(0, m, m)
        ids = tuple((pa.subject_id[i], k) for k, i in enumerate(idx))
        la = rank_and_recruit(Predictions(ids, pa.predicted_end[idx], pa.delta_hat[idx]),
                              trial_size, horizon)
        lb = rank_and_recruit(Predictions(ids, pb.predicted_end[idx], pb.delta_hat[idx]),
                              trial_size, horizon)
        ag = agreement(la, lb)
        counts[r] = (ag.agree_recruit, ag.agree_not, ag.only_a, ag.only_b)
    return BootstrapAgreement(counts)


@dataclass(frozen=True)
class ModelComparison:
    """Both progression models and their recruitment lists."""

    derived: DerivedTimes
    fits: dict
    imputed: dict = field(repr=False)
    lists: dict = field(repr=False)
    agreement: Agreement = None


def compare_models(visits, trial_size=200, horizon=2.0, upper_cap=MAX_YEARS,
                   extension_kind="weibull", interpolation="carry_forward"):
    """Run the full pipeline with the extrapolated (``a``) and
    non-extrapolated (``b``) imputations."""
    derived = visits if isinstance(visits, DerivedTimes) else derive_times(visits)
    configs = {
        "extrapolated": ImputationConfig(approach="extrapolated", extension_kind=extension_kind,
                                         interpolation=interpolation, upper_cap=upper_cap),
        "non_extrapolated": ImputationConfig(approach="non_extrapolated",
                                             interpolation=interpolation),
    }
    fits, imputed, lists = {}, {}, {}
    for name, cfg in configs.items():
        times, _ = impute_times(derived, cfg)
        imputed[name] = times
        fits[name] = fit_progression(times)
        lists[name] = rank_and_recruit(predict_cohort(fits[name], times, horizon),
                                       trial_size, horizon)
    return ModelComparison(derived, fits, imputed, lists,
                           agreement(lists["extrapolated"], lists["non_extrapolated"]))


# progression coefficients used to generate scores for the synthetic cohort
SYNTHETIC_THETA = (21.68, 0.084, 1.048, -0.024, -0.021, -0.089, 0.006)


def synthetic_cohort(n=970, seed=2024, theta=SYNTHETIC_THETA, sigma=1.2,
                     start_date=_dt.date(2002, 1, 1)):
    """Synthetic at-risk cohort resembling a prodromal Huntington's study.

    Baseline age is normal (mean 40, sd 10, clipped to [18, 75]); CAG is
    ``36 + Poisson(6)`` capped at 56. Years from first visit to diagnosis are
    Weibull with shape 1.6, truncated at 60, with a scale that shrinks with
    the CAG-age product. Follow-up is uniform on [1, 12] years and about a
    quarter of subjects are diagnosed before their last visit. ``cUHDRS_end`` follows the
    progression model with coefficients ``theta`` evaluated at the true
    ``TIME_end``, plus normal noise with sd ``sigma``.

    Returns
    -------
    visits : list of SubjectVisits
    true_time_start : ndarray
        Uncensored years to diagnosis, for oracle comparisons.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 970])))
    age = np.clip(rng.normal(40.0, 10.0, n), 18.0, 75.0)
    cag = np.minimum(36 + rng.poisson(6.0, n), 56)
    cap = age * (cag - 33.66)
    scale = 18.0 * np.exp(-0.006 * (cap - 330.0))
    # Weibull(1.6, scale) truncated at the life-span cap, by inversion
    top = -np.expm1(-(MAX_YEARS / scale) ** 1.6)
    t_dx = scale * (-np.log1p(-rng.uniform(0.0, 1.0, n) * top)) ** (1 / 1.6)
    days_follow = np.round(rng.uniform(1.0, 12.0, n) * DAYS_PER_YEAR).astype(int)
    days_dx = np.maximum(np.round(t_dx * DAYS_PER_YEAR).astype(int), 1)
    entry = rng.integers(0, 5 * 365, n)
    score0 = np.clip(rng.normal(17.5 - 0.08 * (age - 40) - 0.25 * (cag - 42), 2.0, n),
                     5.0, 22.0)
    time_end = (days_dx - days_follow) / DAYS_PER_YEAR
    mean_end = theta[0] + progression_design(time_end, score0, age, cag) @ np.asarray(theta[1:])
    score1 = mean_end + sigma * rng.standard_normal(n)
    visits = []
    for i in range(n):
        first = start_date + _dt.timedelta(days=int(entry[i]))
        last = first + _dt.timedelta(days=int(days_follow[i]))
        dx = first + _dt.timedelta(days=int(days_dx[i])) if days_dx[i] <= days_follow[i] else None
        visits.append(SubjectVisits(
            subject_id=f"S{i + 1:04d}",
            first_visit_date=first,
            last_visit_date=last,
            diagnosis_date=dx,
            age_at_first_visit=round(float(age[i]), 2),
            cag=int(cag[i]),
            cuhdrs_start=round(float(score0[i]), 3),
            cuhdrs_end=round(float(score1[i]), 3),
        ))
    return visits, days_dx / DAYS_PER_YEAR
