"""Cox proportional hazards fit and Breslow baseline survival.

The conditional survival of the censored covariate is modelled as
``S(t | z) = S0(t) ** exp(lambda' z)``. ``S0`` is Breslow's step estimator, and
we keep its cumulative hazard rather than the survival values so that
``S0(t) ** e`` can be evaluated as ``exp(-e * H0(t))`` without losing digits
when ``S0`` is very close to one.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import (
    DimensionMismatch,
    NoEvents,
    NotConverged,
    SingularInformation,
)

__all__ = [
    "CensoredRecord",
    "CensoredData",
    "CoxFit",
    "BaselineSurvival",
    "SurvivalCurve",
    "as_censored_data",
    "fit_cox",
    "partial_loglik",
    "breslow_baseline",
    "eval_survival",
    "INTERPOLATIONS",
]

INTERPOLATIONS = ("carry_forward", "mean")


@dataclass(frozen=True)
class CensoredRecord:
    """One subject: outcome ``y``, observed covariate ``w = min(x, c)``,
    indicator ``delta = 1`` when ``w`` is the true value, and fully observed
    covariates ``z``."""

    y: float
    w: float
    delta: int
    z: tuple = ()

    def __post_init__(self):
        if not math.isfinite(self.w) or self.w < 0:
            raise ValueError(f"w must be finite and non-negative, got {self.w}")
        if self.delta not in (0, 1):
            raise ValueError(f"delta must be 0 or 1, got {self.delta}")
        object.__setattr__(self, "z", tuple(float(v) for v in self.z))


@dataclass(frozen=True)
class CensoredData:
    """Column-oriented view of a record set. ``z`` has shape ``(n, p)``."""

    y: np.ndarray
    w: np.ndarray
    delta: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        w = np.asarray(self.w, dtype=float).reshape(-1)
        delta = np.asarray(self.delta).reshape(-1).astype(np.int8)
        z = np.asarray(self.z, dtype=float)
        n = w.shape[0]
        if z.ndim == 1:
            z = z.reshape(n, -1) if n else z.reshape(0, 0)
        if y.shape[0] != n or delta.shape[0] != n or z.shape[0] != n:
            raise DimensionMismatch("y, w, delta and z must have the same number of rows")
        if n and (not np.all(np.isfinite(w)) or np.any(w < 0)):
            raise ValueError("w must be finite and non-negative")
        if np.any((delta != 0) & (delta != 1)):
            raise ValueError("delta must be 0 or 1")
        for name, arr in (("y", y), ("w", w), ("delta", delta), ("z", z)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self):
        return self.w.shape[0]

    @property
    def p(self):
        return self.z.shape[1]

    @classmethod
    def from_records(cls, records):
        records = list(records)
        if not records:
            return cls(np.empty(0), np.empty(0), np.empty(0, dtype=np.int8), np.empty((0, 0)))
        p = len(records[0].z)
        if any(len(r.z) != p for r in records):
            raise DimensionMismatch("all records must share the same number of covariates")
        return cls(
            np.array([r.y for r in records], dtype=float),
            np.array([r.w for r in records], dtype=float),
            np.array([r.delta for r in records], dtype=np.int8),
            np.array([r.z for r in records], dtype=float).reshape(len(records), p),
        )

    def to_records(self):
        return [
            CensoredRecord(float(self.y[i]), float(self.w[i]), int(self.delta[i]),
                           tuple(self.z[i]))
            for i in range(self.n)
        ]

    def replace(self, **changes):
        fields = {"y": self.y, "w": self.w, "delta": self.delta, "z": self.z}
        fields.update(changes)
        return CensoredData(**fields)

    def take(self, index):
        index = np.asarray(index)
        return CensoredData(self.y[index], self.w[index], self.delta[index], self.z[index])


def as_censored_data(records):
    """Accept a :class:`CensoredData` or any iterable of :class:`CensoredRecord`."""
    if isinstance(records, CensoredData):
        return records
    return CensoredData.from_records(records)


@dataclass(frozen=True)
class CoxFit:
    lambda_hat: np.ndarray
    loglik: float
    n_iter: int
    converged: bool
    gradient_norm: float = 0.0

    @property
    def p(self):
        return self.lambda_hat.shape[0]


# -- partial likelihood ------------------------------------------------------

def _risk_groups(w):
    """Unique sorted times and, per record, the index of its time."""
    knots, inverse = np.unique(w, return_inverse=True)
    return knots, inverse


def _reverse_cumsum(a):
    return np.cumsum(a[::-1], axis=0)[::-1]


def _partial_derivatives(w, delta, z, lam, order=2):
    """Breslow-ties partial log-likelihood with gradient and information.

    Risk sets are ``{j : w_j >= w_i}``; tied times share the same risk set.
    """
    knots, inverse = _risk_groups(w)
    eta = z @ lam
    shift = eta.max() if eta.size else 0.0
    r = np.exp(eta - shift)
    m = knots.shape[0]
    p = z.shape[1]

    s0_g = np.bincount(inverse, weights=r, minlength=m)
    s0 = _reverse_cumsum(s0_g)
    d_g = np.bincount(inverse, weights=delta, minlength=m)
    ev = d_g > 0

    loglik = float(np.sum(delta * eta) - np.sum(d_g[ev] * (np.log(s0[ev]) + shift)))
    if order == 0:
        return loglik, None, None

    s1_g = np.zeros((m, p))
    np.add.at(s1_g, inverse, r[:, None] * z)
    s1 = _reverse_cumsum(s1_g)
    zbar = s1[ev] / s0[ev, None]
    grad = delta @ z - d_g[ev] @ zbar
    if order == 1:
        return loglik, grad, None

    s2_g = np.zeros((m, p, p))
    np.add.at(s2_g, inverse, r[:, None, None] * z[:, :, None] * z[:, None, :])
    s2 = _reverse_cumsum(s2_g)
    info = np.einsum(
        "k,kij->ij", d_g[ev],
        s2[ev] / s0[ev, None, None] - zbar[:, :, None] * zbar[:, None, :],
    )
    return loglik, grad, info


def partial_loglik(records, lambda_hat):
    """Breslow-ties Cox partial log-likelihood at ``lambda_hat``."""
    data = as_censored_data(records)
    lam = np.asarray(lambda_hat, dtype=float).reshape(-1)
    if lam.shape[0] != data.p:
        raise DimensionMismatch(f"lambda has length {lam.shape[0]}, data has p={data.p}")
    return _partial_derivatives(data.w, data.delta.astype(float), data.z, lam, order=0)[0]


def _first_singular_column(info):
    p = info.shape[0]
    scale = max(float(np.max(np.abs(np.diag(info)))), 1e-300)
    for j in range(p):
        sub = info[: j + 1, : j + 1]
        if np.linalg.matrix_rank(sub, tol=1e-10 * scale) < j + 1:
            return j
    return None


def fit_cox(records, tol=1e-8, max_iter=100, max_halvings=20):
    """Maximize the Cox partial likelihood by Newton-Raphson with step halving.

    Parameters
    ----------
    records : CensoredData or iterable of CensoredRecord
    tol : float
        Convergence threshold on the max-norm of the score.
    max_iter : int
        Maximum number of Newton iterations.
    max_halvings : int
        Step-halving attempts per iteration when the likelihood fails to improve.

    Returns
    -------
    CoxFit

    Raises
    ------
    NoEvents
        If no record is uncensored.
    SingularInformation
        If the information matrix is singular (collinear covariates).
    NotConverged
        If the score does not reach ``tol`` within ``max_iter`` iterations.
    """
    data = as_censored_data(records)
    if data.n == 0 or not np.any(data.delta == 1):
        raise NoEvents("at least one uncensored record is required")
    w = data.w
    delta = data.delta.astype(float)
    z = data.z
    p = data.p
    lam = np.zeros(p)

    if p == 0:
        loglik = _partial_derivatives(w, delta, z, lam, order=0)[0]
        return CoxFit(lam, loglik, 0, True, 0.0)

    loglik, grad, info = _partial_derivatives(w, delta, z, lam)
    for it in range(max_iter + 1):
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= tol:
            return CoxFit(lam, loglik, it, True, gnorm)
        if it == max_iter:
            break
        try:
            chol = np.linalg.cholesky(info)
        except np.linalg.LinAlgError:
            chol = None
        bad = _first_singular_column(info)
        if chol is None or bad is not None:
            col = bad if bad is not None else 0
            raise SingularInformation(
                f"information matrix is singular; covariate column {col} is collinear "
                "with the others over the event risk sets",
                column=col,
            )
        step = np.linalg.solve(info, grad)
        factor = 1.0
        for _ in range(max_halvings + 1):
            trial = lam + factor * step
            new_loglik = _partial_derivatives(w, delta, z, trial, order=0)[0]
            if np.isfinite(new_loglik) and new_loglik >= loglik - 1e-12 * abs(loglik):
                break
            factor *= 0.5
        else:
            raise NotConverged(
                f"step halving exhausted at iteration {it} (|score|={gnorm:.3g})"
            )
        lam = trial
        loglik, grad, info = _partial_derivatives(w, delta, z, lam)
    raise NotConverged(
        f"Newton-Raphson did not reach tol={tol} in {max_iter} iterations "
        f"(|score|={gnorm:.3g})"
    )


# -- Breslow baseline -------------------------------------------------------

@dataclass(frozen=True)
class BaselineSurvival:
    """Breslow step estimate of ``S0`` on the distinct observed times.

    ``cumhaz[k]`` is the Breslow cumulative hazard at ``knots[k]`` (so
    ``values = exp(-cumhaz)``); ``event_flags[k]`` marks knots carrying at
    least one uncensored observation; ``x_tilde`` is the largest uncensored
    time.
    """

    knots: np.ndarray
    cumhaz: np.ndarray
    event_flags: np.ndarray
    x_tilde: float
    interpolation: str = "carry_forward"
    _step: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        cumhaz = np.asarray(self.cumhaz, dtype=float)
        flags = np.asarray(self.event_flags, dtype=bool)
        if knots.ndim != 1 or knots.shape != cumhaz.shape or knots.shape != flags.shape:
            raise ValueError("knots, cumhaz and event_flags must be 1-D of equal length")
        if knots.size and np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(np.diff(cumhaz) < 0) or np.any(cumhaz < 0):
            raise ValueError("cumulative hazard must be non-negative and non-decreasing")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")
        if not flags.any():
            raise NoEvents("baseline has no event knots")
        if knots[flags][-1] != self.x_tilde:
            raise ValueError("x_tilde must equal the largest event knot")
        for name, arr in (("knots", knots), ("cumhaz", cumhaz), ("event_flags", flags)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "x_tilde", float(self.x_tilde))
        object.__setattr__(self, "_step", self._interpolated_cumhaz())

    @classmethod
    def from_values(cls, knots, values, event_flags, interpolation="carry_forward"):
        """Build from survival values instead of cumulative hazards."""
        values = np.asarray(values, dtype=float)
        if np.any(values <= 0) or np.any(values > 1):
            raise ValueError("baseline survival values must lie in (0, 1]")
        flags = np.asarray(event_flags, dtype=bool)
        knots = np.asarray(knots, dtype=float)
        return cls(knots, -np.log(values), flags, float(knots[flags][-1]), interpolation)

    @property
    def values(self):
        """``S0`` at each knot as given by Breslow's formula (carry forward)."""
        return np.exp(-self.cumhaz)

    @property
    def survival_at_x_tilde(self):
        return math.exp(-self.cumhaz_at_x_tilde)

    @property
    def cumhaz_at_x_tilde(self):
        idx = int(np.searchsorted(self.knots, self.x_tilde))
        return float(self.cumhaz[idx])

    def with_interpolation(self, interpolation):
        return BaselineSurvival(self.knots, self.cumhaz, self.event_flags, self.x_tilde,
                                interpolation)

    def _interpolated_cumhaz(self):
        if self.interpolation == "carry_forward":
            return self.cumhaz.copy()
        # mean interpolation: a censored knot lying between two uncensored
        # knots takes the average of the neighbouring S0 values; before the
        # first event the lower neighbour is S0 = 1, and past the last event
        # there is no upper neighbour so the value carries forward.
        out = self.cumhaz.copy()
        event_idx = np.flatnonzero(self.event_flags)
        for k in np.flatnonzero(~self.event_flags):
            nxt = event_idx[event_idx > k]
            if nxt.size == 0:
                continue
            below = math.exp(-self.cumhaz[k])
            above = math.exp(-self.cumhaz[nxt[0]])
            out[k] = -math.log(0.5 * (below + above))
        return out

    def knot_cumhaz(self):
        """Cumulative hazard at each knot under the interpolation mode."""
        return self._step

    def knot_values(self):
        """``S0`` at each knot under the interpolation mode."""
        return np.exp(-self._step)

    def cumhaz_at(self, t):
        """Step-function cumulative hazard at ``t`` (scalar or array).

        Valid on ``[0, W_(n)]``; beyond the last knot the final value carries
        forward. Extension to the tail is the job of :class:`SurvivalCurve`.
        """
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side="right") - 1
        out = np.where(idx >= 0, self._step[np.clip(idx, 0, None)], 0.0)
        return out if out.ndim else float(out)


def breslow_baseline(records, fit, interpolation="carry_forward"):
    """Breslow estimate of the baseline survival at every distinct observed time.

    ``H0(t) = sum_{i: w_i <= t} delta_i / sum_{j: w_j >= w_i} exp(lambda' z_j)``
    and ``S0 = exp(-H0)``. Tied times collapse onto one knot with their event
    counts summed.
    """
    data = as_censored_data(records)
    if data.n == 0 or not np.any(data.delta == 1):
        raise NoEvents("Breslow's estimator needs at least one uncensored record")
    lam = np.asarray(fit.lambda_hat, dtype=float).reshape(-1)
    if lam.shape[0] != data.p:
        raise DimensionMismatch(f"fit has p={lam.shape[0]}, data has p={data.p}")
    knots, inverse = _risk_groups(data.w)
    m = knots.shape[0]
    risk = np.exp(data.z @ lam) if data.p else np.ones(data.n)
    at_risk = _reverse_cumsum(np.bincount(inverse, weights=risk, minlength=m))
    events = np.bincount(inverse, weights=data.delta.astype(float), minlength=m)
    cumhaz = np.cumsum(events / at_risk)
    flags = events > 0
    x_tilde = float(knots[flags][-1])
    return BaselineSurvival(knots, cumhaz, flags, x_tilde, interpolation)


# -- conditional survival curve --------------------------------------------

@dataclass(frozen=True)
class SurvivalCurve:
    """Step baseline up to ``x_tilde`` spliced with a tail extension beyond it."""

    baseline: BaselineSurvival
    lambda_hat: np.ndarray
    extension: "object"
    upper_cap: float = None

    def __post_init__(self):
        lam = np.asarray(self.lambda_hat, dtype=float).reshape(-1)
        lam.flags.writeable = False
        object.__setattr__(self, "lambda_hat", lam)
        if self.upper_cap is not None and not self.upper_cap > 0:
            raise ValueError("upper_cap must be positive")

    @property
    def p(self):
        return self.lambda_hat.shape[0]

    def exponent(self, z):
        """``exp(lambda' z)``, the power applied to the baseline survival."""
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.shape[0] != self.p:
            raise DimensionMismatch(f"z has length {z.shape[0]}, model has p={self.p}")
        return math.exp(float(z @ self.lambda_hat)) if self.p else 1.0

    def baseline_cumhaz(self, t):
        """Baseline cumulative hazard at scalar ``t``, tail included."""
        from .tail import extension_cumhaz

        if t <= self.baseline.x_tilde:
            return self.baseline.cumhaz_at(t)
        return extension_cumhaz(self.extension, self.baseline, t)


def eval_survival(curve, t, z):
    """Evaluate ``S(t | z)`` on a spliced survival curve.

    Before the first knot the survival is 1; up to ``x_tilde`` the step
    baseline (under the curve's interpolation mode) is used; beyond it the
    tail extension. ``upper_cap`` only bounds integration and is ignored here.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    e = curve.exponent(z)
    h = curve.baseline_cumhaz(t)
    if math.isinf(h):
        return 0.0
    return math.exp(-e * h)
