"""Extensions of the baseline survival beyond the largest uncensored time.

Breslow's estimator is only informative up to ``x_tilde``. To integrate the
survival curve to infinity something has to be assumed past that point:

* ``carry_forward``: hold ``S0(x_tilde)`` forever (integral to infinity diverges)
* ``drop_off``: ``S0 = 0`` past ``x_tilde``
* ``exponential``: ``S0(t) = exp(t * log S0(x_tilde) / x_tilde)``
* ``weibull``: ``S0(t) = exp(-rho * t**nu)`` with ``rho`` pinned so the curve is
  continuous at ``x_tilde`` and ``nu`` chosen by profile maximum likelihood.

Both parametric kinds are stored as ``(nu, rho)`` on the baseline
cumulative-hazard scale, the exponential one with ``nu = 1``.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import minimize_scalar

from .adaptive import QuadratureResult, gauss_kronrod, integrate_to_infinity
from .cox import as_censored_data
from .errors import DegenerateTail, Divergent, NonConvergence, OutOfRange
from .special import log_upper_incomplete_gamma

__all__ = [
    "EXTENSION_KINDS",
    "TailExtension",
    "fit_extension",
    "eval_extension",
    "extension_cumhaz",
    "tail_integral",
    "weibull_profile_loglik",
]

EXTENSION_KINDS = ("carry_forward", "drop_off", "exponential", "weibull")

SHAPE_BOUNDS = (0.05, 20.0)
GRID_POINTS = 50


@dataclass(frozen=True)
class TailExtension:
    """Tail rule for ``t > x_tilde``.

    ``nu`` and ``rho`` are set for the parametric kinds. ``fit_converged`` is
    the optimizer status for ``weibull``; ``fallback_from`` records that this
    extension replaced a failed fit of another kind.
    """

    kind: str
    nu: float = None
    rho: float = None
    fit_converged: bool = None
    fallback_from: str = None

    def __post_init__(self):
        if self.kind not in EXTENSION_KINDS:
            raise ValueError(f"kind must be one of {EXTENSION_KINDS}, got {self.kind!r}")
        if self.kind in ("exponential", "weibull"):
            if self.nu is None or self.rho is None or not (self.nu > 0 and self.rho > 0):
                raise ValueError(f"{self.kind} extension needs positive nu and rho")

    @property
    def is_parametric(self):
        return self.kind in ("exponential", "weibull")

    @property
    def used_fallback(self):
        return self.fallback_from is not None


def _tail_anchor(baseline):
    x_tilde = baseline.x_tilde
    h_tilde = baseline.cumhaz_at_x_tilde
    if not h_tilde > 0:
        raise DegenerateTail("S0(x_tilde) = 1; a parametric tie-in is undefined")
    if not x_tilde > 0:
        raise DegenerateTail("x_tilde = 0; a parametric tie-in is undefined")
    return x_tilde, h_tilde


def weibull_profile_loglik(nu, w, delta, x_tilde, h_tilde, log_risk=None):
    """Censored Weibull log-likelihood with ``rho`` profiled out by continuity.

    The cumulative hazard is ``H(w) = h_tilde * (w / x_tilde)**nu`` times the
    subject's relative risk ``exp(log_risk)`` when given, which makes
    ``exp(-H(x_tilde)) = S0(x_tilde)`` hold for every ``nu``.
    """
    log_ratio = np.log(w) - math.log(x_tilde)
    log_h = math.log(h_tilde) + nu * log_ratio
    if log_risk is not None:
        log_h = log_h + log_risk
    # log hazard = log(nu) + log(H) - log(w)
    log_hazard = math.log(nu) + log_h - np.log(w)
    return float(np.sum(delta * log_hazard) - np.sum(np.exp(log_h)))


def fit_extension(kind, records, baseline, fit=None, fixed_shape=None,
                  shape_bounds=SHAPE_BOUNDS, grid_points=GRID_POINTS):
    """Fit a tail extension for ``baseline``.

    Parameters
    ----------
    kind : {'carry_forward', 'drop_off', 'exponential', 'weibull'}
    records : CensoredData or iterable of CensoredRecord
        Data used by the Weibull likelihood.
    baseline : BaselineSurvival
    fit : CoxFit, optional
        When given, each record's Weibull likelihood contribution uses its
        Cox relative risk ``exp(lambda' z)``, so the fitted ``(nu, rho)`` live on
        the baseline scale. Without it the records are treated as draws from
        the baseline itself.
    fixed_shape : float, optional
        Pin the Weibull shape (``1`` reproduces the exponential extension).

    Raises
    ------
    DegenerateTail
        ``S0(x_tilde) = 1`` for a parametric kind.
    NonConvergence
        The Weibull shape search hit the bracket boundary or failed.
    """
    if kind not in EXTENSION_KINDS:
        raise ValueError(f"kind must be one of {EXTENSION_KINDS}, got {kind!r}")
    if kind in ("carry_forward", "drop_off"):
        return TailExtension(kind)
    x_tilde, h_tilde = _tail_anchor(baseline)
    if kind == "exponential":
        return TailExtension("exponential", nu=1.0, rho=h_tilde / x_tilde)

    if fixed_shape is not None:
        nu = float(fixed_shape)
        return TailExtension("weibull", nu=nu, rho=h_tilde / x_tilde ** nu,
                             fit_converged=True)

    data = as_censored_data(records)
    w = np.maximum(data.w, 1e-12 * max(float(data.w.max()), 1.0))
    delta = data.delta.astype(float)
    log_risk = None
    if fit is not None and data.p:
        log_risk = data.z @ np.asarray(fit.lambda_hat, dtype=float)

    def negll(nu):
        val = weibull_profile_loglik(nu, w, delta, x_tilde, h_tilde, log_risk)
        return -val if np.isfinite(val) else np.inf

    grid = np.geomspace(shape_bounds[0], shape_bounds[1], grid_points)
    values = np.array([negll(nu) for nu in grid])
    if not np.any(np.isfinite(values)):
        raise NonConvergence("Weibull profile likelihood is not finite on the shape grid")
    k = int(np.argmin(values))
    if k == 0 or k == grid_points - 1:
        raise NonConvergence(
            f"Weibull shape estimate sits on the search boundary ({grid[k]:.3g})"
        )
    res = minimize_scalar(negll, bounds=(grid[k - 1], grid[k + 1]), method="bounded",
                          options={"xatol": 1e-10})
    if not res.success or not np.isfinite(res.fun):
        raise NonConvergence(f"Weibull shape search failed: {res.message}")
    nu = float(res.x)
    return TailExtension("weibull", nu=nu, rho=h_tilde / x_tilde ** nu,
                         fit_converged=True)


def extension_cumhaz(ext, baseline, t):
    """Baseline cumulative hazard of the extension at ``t > x_tilde``."""
    if ext.kind == "carry_forward":
        return baseline.cumhaz_at_x_tilde
    if ext.kind == "drop_off":
        return math.inf
    return ext.rho * t ** ext.nu


def eval_extension(ext, baseline, t):
    """Baseline survival from the extension at ``t`` (must exceed ``x_tilde``)."""
    if not t > baseline.x_tilde:
        raise OutOfRange(f"t={t} is not beyond x_tilde={baseline.x_tilde}; use the baseline")
    h = extension_cumhaz(ext, baseline, t)
    return 0.0 if math.isinf(h) else math.exp(-h)


def _parametric_closed_form(nu, c, lo, hi, log_shift=0.0):
    # int_lo^hi exp(-c t^nu) dt = c^(-1/nu) / nu * [Gamma(1/nu, c lo^nu) - Gamma(1/nu, c hi^nu)]
    a = 1.0 / nu
    log_g_lo = log_upper_incomplete_gamma(a, c * lo ** nu)
    prefix = log_shift - math.log(nu) - a * math.log(c)
    if hi is None:
        return math.exp(prefix + log_g_lo)
    log_g_hi = log_upper_incomplete_gamma(a, c * hi ** nu)
    if math.isinf(log_g_hi):
        return math.exp(prefix + log_g_lo)
    return math.exp(prefix + log_g_lo) * -math.expm1(log_g_hi - log_g_lo)


def tail_integral(ext, baseline, start, exponent, upper_cap=None, closed_form=True,
                  full_output=False, log_shift=0.0):
    """Integrate ``S0(t) ** exponent`` from ``start`` (>= ``x_tilde``) over the tail.

    The upper limit is ``upper_cap`` when given, otherwise infinity.

    Parameters
    ----------
    closed_form : bool
        Use the exact formulas (incomplete gamma for the parametric kinds).
        ``False`` forces adaptive Gauss-Kronrod quadrature instead.
    full_output : bool
        Return a :class:`~censcov.adaptive.QuadratureResult` instead of a float.
    log_shift : float
        Multiply the integrand by ``exp(log_shift)``. Passing ``-log S(start)``
        yields the mean residual life directly, without underflow when
        ``S(start)`` is tiny.

    Raises
    ------
    Divergent
        Carry-forward tail with no ``upper_cap``.
    """
    if start < baseline.x_tilde:
        raise OutOfRange(f"start={start} lies before x_tilde={baseline.x_tilde}")
    if not exponent > 0:
        raise ValueError("exponent must be positive")

    def done(value, err=0.0, nsub=0, converged=True):
        if full_output:
            return QuadratureResult(value, err, nsub, converged)
        return value

    if upper_cap is not None and upper_cap <= start:
        return done(0.0)
    if ext.kind == "drop_off":
        return done(0.0)
    if ext.kind == "carry_forward":
        if upper_cap is None:
            raise Divergent("carry-forward tail makes the integral to infinity diverge")
        level = math.exp(log_shift - exponent * baseline.cumhaz_at_x_tilde)
        return done(level * (upper_cap - start))

    c = exponent * ext.rho
    if closed_form:
        return done(_parametric_closed_form(ext.nu, c, start, upper_cap, log_shift))

    # factor out the integrand's value at `start` so the quadrature sees an O(1)
    # function and its absolute tolerance acts as a relative one
    h_start = c * start ** ext.nu
    scale = math.exp(log_shift - h_start)

    def integrand(t):
        return np.exp(h_start - c * np.power(t, ext.nu))

    if upper_cap is None:
        res = integrate_to_infinity(integrand, start)
    else:
        res = gauss_kronrod(integrand, start, upper_cap)
    res = QuadratureResult(res.value * scale, res.abs_error * scale, res.subdivisions,
                           res.converged)
    return res if full_output else res.value
