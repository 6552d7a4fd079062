"""Conditional mean imputation of a right-censored covariate.

A censored ``w`` is replaced by

    E(X | X > w, z) = w + int_w^inf S(x | z) dx / S(w | z)

with ``S`` the Cox/Breslow survival curve. The ``non_extrapolated`` approach
evaluates the integral with trapezoids over the observed times (and so stops
at the largest one); the ``extrapolated`` approach splices a tail extension
onto Breslow's estimator and integrates all the way out.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .cox import (
    INTERPOLATIONS,
    SurvivalCurve,
    as_censored_data,
    breslow_baseline,
    fit_cox,
)
from .errors import CensCovError, NonConvergence, ZeroSurvival
from .quadrature import integrate_survival, trapezoid_over_knots, trapezoid_over_rows
from .tail import EXTENSION_KINDS, TailExtension, fit_extension

__all__ = [
    "APPROACHES",
    "ImputationConfig",
    "ImputationDiagnostics",
    "ImputedDataset",
    "TRAPEZOID_HEIGHTS",
    "conditional_mean",
    "ordered_row_survival",
    "fit_survival_curve",
    "impute_dataset",
]

APPROACHES = ("extrapolated", "non_extrapolated")
TRAPEZOID_HEIGHTS = ("subject", "ordered_rows")


@dataclass(frozen=True)
class ImputationConfig:
    """How conditional means are computed.

    Attributes
    ----------
    approach : {'extrapolated', 'non_extrapolated'}
    extension_kind : str
        Tail extension used by the extrapolated approach.
    interpolation : {'carry_forward', 'mean'}
        How Breslow's estimator is valued at censored knots.
    upper_cap : float or None
        Finite upper limit for the extrapolated integral.
    treat_max_as_event : bool or None
        Treat the record(s) at the largest observed time as uncensored. ``None``
        means: on for the non-extrapolated approach without covariates, off
        otherwise.
    covariate_adjusted_tail : bool
        Weight each record's Weibull tail likelihood by its Cox relative risk.
    fallback_kind : str
        Extension used when the Weibull fit fails.
    trapezoid_heights : {'subject', 'ordered_rows'}
        Heights of the non-extrapolated trapezoids: the imputed subject's own
        curve ``S(W_(j) | z)``, or each ordered record's ``S(W_(j) | Z_(j))``
        (see :func:`censcov.quadrature.trapezoid_over_rows`).
    """

    approach: str = "extrapolated"
    extension_kind: str = "weibull"
    interpolation: str = "carry_forward"
    upper_cap: float = None
    treat_max_as_event: bool = None
    covariate_adjusted_tail: bool = True
    fallback_kind: str = "exponential"
    trapezoid_heights: str = "subject"

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise ValueError(f"approach must be one of {APPROACHES}, got {self.approach!r}")
        if self.extension_kind not in EXTENSION_KINDS:
            raise ValueError(f"extension_kind must be one of {EXTENSION_KINDS}")
        if self.fallback_kind not in EXTENSION_KINDS:
            raise ValueError(f"fallback_kind must be one of {EXTENSION_KINDS}")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")
        if self.trapezoid_heights not in TRAPEZOID_HEIGHTS:
            raise ValueError(f"trapezoid_heights must be one of {TRAPEZOID_HEIGHTS}")
        if self.upper_cap is not None and not self.upper_cap > 0:
            raise ValueError("upper_cap must be positive")

    def resolved_treat_max(self, p):
        if self.treat_max_as_event is not None:
            return bool(self.treat_max_as_event)
        return self.approach == "non_extrapolated" and p == 0


def ordered_row_survival(curve, records):
    """Sorted observed times and ``S(W_(j) | Z_(j))`` on the step baseline."""
    data = as_censored_data(records)
    order = np.argsort(data.w, kind="stable")
    w = data.w[order]
    e = np.exp(data.z[order] @ np.asarray(curve.lambda_hat, dtype=float))
    return w, np.exp(-e * np.asarray(curve.baseline.cumhaz_at(w)))


def _detail(curve, w, z, config, rows=None):
    """(conditional mean, S(w|z), integral, integral / S(w|z)) for one record."""
    if config.approach == "non_extrapolated":
        e = curve.exponent(z)
        surv = math.exp(-e * curve.baseline.cumhaz_at(w))
        if config.trapezoid_heights == "ordered_rows":
            if rows is None:
                raise ValueError("ordered_rows trapezoids need the sample rows")
            integral = trapezoid_over_rows(rows[0], rows[1], w).value
        else:
            integral = trapezoid_over_knots(curve.baseline, e, w).value
        if not surv > 0:
            raise ZeroSurvival(f"S(w | z) = 0 at w={w}; the conditional mean is undefined")
        residual = integral / surv
    else:
        # work relative to S(w | z) so far-tail records do not underflow
        log_surv = -curve.exponent(z) * curve.baseline_cumhaz(w)
        if math.isinf(log_surv):
            raise ZeroSurvival(f"S(w | z) = 0 at w={w}; the conditional mean is undefined")
        surv = math.exp(log_surv)
        residual = integrate_survival(curve, z, w, log_shift=-log_surv).value
        integral = residual * surv
    cm = w + residual
    cap = config.upper_cap if config.approach == "extrapolated" else None
    if cap is not None and w <= cap:
        # exact value is at most the cap; a flat tail can land one ulp above it
        cm = min(cm, cap)
    return cm, surv, integral, residual


def conditional_mean(curve, w, z, config, rows=None):
    """Conditional mean ``E(X | X > w, z)`` under ``config.approach``.

    ``rows`` is the ``(sorted w, survival)`` pair from
    :func:`ordered_row_survival`, required only for ``ordered_rows`` trapezoids.

    Raises
    ------
    ZeroSurvival
        ``S(w | z) = 0`` (e.g. immediate drop-off beyond ``x_tilde``).
    Divergent
        Carry-forward tail integrated to infinity.
    """
    if w < 0:
        raise ValueError("w must be non-negative")
    return _detail(curve, w, z, config, rows)[0]


@dataclass(frozen=True)
class ImputationDiagnostics:
    """Per-record bookkeeping, aligned with the input order.

    ``mean_residual`` is ``integral_value / survival_at_w``, computed on a
    relative scale so it stays accurate when ``S(w | z)`` underflows.
    """

    imputed: np.ndarray
    conditional_mean: np.ndarray
    survival_at_w: np.ndarray
    integral_value: np.ndarray
    mean_residual: np.ndarray
    used_fallback_extension: np.ndarray
    errors: tuple

    @property
    def at_boundary(self):
        """Imputed records whose conditional mean equals ``w`` (zero tail mass)."""
        return self.imputed & (self.mean_residual == 0)


@dataclass(frozen=True)
class ImputedDataset:
    data: "object"
    original: "object"
    diagnostics: ImputationDiagnostics
    config: ImputationConfig
    cox_fit: "object" = field(repr=False)
    curve: SurvivalCurve = field(repr=False)

    @property
    def records(self):
        return self.data.to_records()


def fit_survival_curve(records, config, *, fit_delta=None):
    """Fit Cox, Breslow and (for the extrapolated approach) the tail extension.

    Returns ``(cox_fit, curve)``. A failed Weibull fit falls back to
    ``config.fallback_kind`` and is marked on the extension.
    """
    data = as_censored_data(records)
    if fit_delta is not None:
        data = data.replace(delta=fit_delta)
    cox = fit_cox(data)
    baseline = breslow_baseline(data, cox, config.interpolation)
    if config.approach == "extrapolated":
        try:
            ext = fit_extension(config.extension_kind, data, baseline,
                                fit=cox if config.covariate_adjusted_tail else None)
        except NonConvergence:
            fb = fit_extension(config.fallback_kind, data, baseline)
            ext = TailExtension(fb.kind, fb.nu, fb.rho, fit_converged=False,
                                fallback_from=config.extension_kind)
        cap = config.upper_cap
    else:
        ext = TailExtension("carry_forward")
        cap = None
    return cox, SurvivalCurve(baseline, cox.lambda_hat, ext, cap)


def impute_dataset(records, config=ImputationConfig()):
    """Replace every censored covariate value with its conditional mean.

    The survival model is fit once on the full data; each censored record is
    then imputed independently. A failure on one record is kept in
    ``diagnostics.errors`` and leaves that record unimputed; only if every
    censored record fails is the first error raised.
    """
    data = as_censored_data(records)
    fit_delta = data.delta.copy()
    if data.n and config.resolved_treat_max(data.p):
        fit_delta[data.w == data.w.max()] = 1
    cox, curve = fit_survival_curve(data, config, fit_delta=fit_delta)

    n = data.n
    imputed = np.zeros(n, dtype=bool)
    cmean = np.full(n, np.nan)
    surv = np.full(n, np.nan)
    integral = np.full(n, np.nan)
    residual = np.full(n, np.nan)
    errors = [None] * n
    first_error = None
    new_w = data.w.copy()
    todo = np.flatnonzero(fit_delta == 0)
    rows = None
    if config.approach == "non_extrapolated" and config.trapezoid_heights == "ordered_rows":
        rows = ordered_row_survival(curve, data)
    for i in todo:
        try:
            cm, s, val, res = _detail(curve, float(data.w[i]), data.z[i], config, rows)
        except CensCovError as exc:
            errors[i] = f"{type(exc).__name__}: {exc}"
            first_error = first_error or exc
            continue
        imputed[i] = True
        cmean[i], surv[i], integral[i], residual[i] = cm, s, val, res
        new_w[i] = cm
    if todo.size and not imputed.any():
        raise first_error

    fallback = np.zeros(n, dtype=bool)
    if curve.extension.used_fallback:
        fallback[imputed] = True
    diagnostics = ImputationDiagnostics(imputed, cmean, surv, integral, residual, fallback,
                                        tuple(errors))
    for arr in (imputed, cmean, surv, integral, residual, fallback):
        arr.flags.writeable = False
    return ImputedDataset(data.replace(w=new_w), data, diagnostics, config, cox, curve)
