"""Integrals of the conditional survival curve.

Two routes are provided:

``trapezoid_over_knots``
    The established approach: trapezoids between consecutive observed times,
    which silently stops at the largest observed time ``W_(n)``.
``integrate_survival``
    Exact rectangles over the step part of the curve up to ``x_tilde`` plus the
    tail extension integrated to ``upper_cap`` or infinity.
"""

from dataclasses import dataclass

import numpy as np

from .tail import tail_integral

__all__ = ["IntegralResult", "trapezoid_over_knots", "trapezoid_over_rows",
           "integrate_survival"]

METHODS = ("trapezoid_knots", "trapezoid_rows", "exact_step_plus_tail")


@dataclass(frozen=True)
class IntegralResult:
    value: float
    abs_error_estimate: float
    method: str
    subdivisions: int = 0

    def __float__(self):
        return float(self.value)


def trapezoid_over_knots(baseline, exponent, start):
    """Trapezoidal rule over the observed knots, from ``start`` to ``W_(n)``.

    Sums ``0.5 * (S0(W_(j+1))**e + S0(W_(j))**e) * (W_(j+1) - W_(j))`` over
    every consecutive knot pair with ``W_(j) >= start``. Knot values follow the
    baseline's interpolation mode. Nothing beyond ``W_(n)`` is counted.
    """
    if start < 0:
        raise ValueError("start must be non-negative")
    if not exponent > 0:
        raise ValueError("exponent must be positive")
    knots = baseline.knots
    if knots.shape[0] < 2:
        return IntegralResult(0.0, 0.0, "trapezoid_knots", 0)
    surv = np.exp(-exponent * baseline.knot_cumhaz())
    use = knots[:-1] >= start
    widths = np.diff(knots)[use]
    heights = 0.5 * (surv[1:][use] + surv[:-1][use])
    return IntegralResult(float(np.sum(heights * widths)), 0.0, "trapezoid_knots",
                          int(use.sum()))


def trapezoid_over_rows(row_w, row_survival, start):
    """Trapezoids over the sorted sample rows, each valued at its own covariates.

    Variant of :func:`trapezoid_over_knots` in which the height at the ``j``-th
    ordered observation is ``S(W_(j) | Z_(j))``, the survival of the record that
    sits there, rather than ``S(W_(j) | z)`` for the subject being imputed.
    Both coincide when there are no covariates.

    Parameters
    ----------
    row_w : array_like
        Observed times sorted ascending (ties kept as separate rows).
    row_survival : array_like
        ``S(W_(j) | Z_(j))`` aligned with ``row_w``.
    start : float
        Rows with ``W_(j) >= start`` open a trapezoid.
    """
    if start < 0:
        raise ValueError("start must be non-negative")
    row_w = np.asarray(row_w, dtype=float)
    row_survival = np.asarray(row_survival, dtype=float)
    if row_w.shape != row_survival.shape:
        raise ValueError("row_w and row_survival must have the same length")
    if row_w.size < 2:
        return IntegralResult(0.0, 0.0, "trapezoid_rows", 0)
    if np.any(np.diff(row_w) < 0):
        raise ValueError("row_w must be sorted ascending")
    use = row_w[:-1] >= start
    widths = np.diff(row_w)[use]
    heights = 0.5 * (row_survival[1:][use] + row_survival[:-1][use])
    return IntegralResult(float(np.sum(heights * widths)), 0.0, "trapezoid_rows",
                          int(use.sum()))


def _step_integral(baseline, exponent, lo, hi, log_shift=0.0):
    # piecewise-constant integrand: the value at each breakpoint holds until the next
    knots = baseline.knots
    inner = knots[(knots > lo) & (knots < hi)]
    breaks = np.concatenate(([lo], inner, [hi]))
    levels = np.exp(log_shift - exponent * np.asarray(baseline.cumhaz_at(breaks[:-1])))
    return float(np.sum(levels * np.diff(breaks)))


def integrate_survival(curve, z, start, closed_form=True, log_shift=0.0):
    """Integrate ``S(x | z)`` from ``start`` to ``curve.upper_cap`` (or infinity).

    The step region ``[start, x_tilde]`` is summed exactly as rectangles; the
    tail is handed to :func:`censcov.tail.tail_integral`. ``closed_form=False``
    forces adaptive quadrature in the tail. The integrand is multiplied by
    ``exp(log_shift)``.

    Raises
    ------
    Divergent
        Carry-forward tail with no upper cap.
    """
    if start < 0:
        raise ValueError("start must be non-negative")
    e = curve.exponent(z)
    baseline = curve.baseline
    cap = curve.upper_cap
    x_tilde = baseline.x_tilde
    step_hi = x_tilde if cap is None else min(x_tilde, cap)

    value = 0.0
    if start < step_hi:
        value = _step_integral(baseline, e, start, step_hi, log_shift)

    err = 0.0
    nsub = 0
    tail_start = max(start, x_tilde)
    if cap is None or cap > tail_start:
        res = tail_integral(curve.extension, baseline, tail_start, e, upper_cap=cap,
                            closed_form=closed_form, full_output=True,
                            log_shift=log_shift)
        value += res.value
        err = res.abs_error
        nsub = res.subdivisions
    return IntegralResult(value, err, "exact_step_plus_tail", nsub)
