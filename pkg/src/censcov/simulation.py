"""Monte Carlo comparison of full-cohort, extrapolated and non-extrapolated fits.

Each replicate draws a binary ``Z``, a censored covariate ``X`` given ``Z``
(Weibull or log-normal), an outcome ``Y = alpha + beta X + gamma Z + sigma e``
and an independent exponential censoring time ``C``. The outcome model is fit
to the true ``X`` (full cohort) and to the two imputed versions of ``W``.

Random streams are derived from ``(seed, replicate, stream)`` through a
``SeedSequence`` feeding a counter-based Philox generator, so every replicate
is reproducible on its own and results do not depend on execution order.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import math

import numpy as np

from .cox import CensoredData
from .errors import CensCovError, ScenarioFailed
from .imputation import ImputationConfig, impute_dataset
from .regression import fit_ols

__all__ = [
    "ScenarioConfig",
    "SummaryRow",
    "SimulationSummary",
    "SCENARIOS",
    "CENSORING_TARGETS",
    "scenario",
    "generate_dataset",
    "run_replicate",
    "run_scenario",
    "summarize",
]

METHODS = ("full_cohort", "extrapolated", "non_extrapolated")
PARAMETERS = ("alpha", "beta", "gamma")

# exponential censoring rates and the censored fractions they are meant to produce
CENSORING_TARGETS = {
    "weibull": {"light": (0.5, 0.17), "heavy": (2.9, 0.49), "extraheavy": (20.0, 0.82)},
    "lognormal": {"light": (0.2, 0.20), "moderate": (0.4, 0.35), "heavy": (1.67, 0.80)},
}

_STREAM_Z, _STREAM_X, _STREAM_E, _STREAM_C = range(4)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation setting.

    The Weibull covariate has survival ``exp(-(x / scale)**shape)`` with
    ``scale = weibull_scale_base + weibull_scale_z * Z``; the log-normal one
    has ``log X ~ N(lognormal_mean_z * Z, lognormal_var)``.

    ``trapezoid_heights`` selects the non-extrapolated comparator; the default
    ``'ordered_rows'`` values each trapezoid at the ordered record's own
    covariates, ``'subject'`` at the imputed subject's.
    """

    n: int = 500
    x_family: str = "weibull"
    weibull_shape: float = 0.75
    weibull_scale_base: float = 0.25
    weibull_scale_z: float = 0.25
    lognormal_mean_z: float = 0.05
    lognormal_var: float = 0.25
    censor_rate: float = 0.5
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 0.25
    sigma: float = 1.0
    replicates: int = 200
    seed: int = 2024
    extension_kind: str = "weibull"
    interpolation: str = "carry_forward"
    trapezoid_heights: str = "ordered_rows"

    def __post_init__(self):
        if self.x_family not in ("weibull", "lognormal"):
            raise ValueError("x_family must be 'weibull' or 'lognormal'")
        positive = ("weibull_shape", "weibull_scale_base", "lognormal_var",
                    "censor_rate", "sigma")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.weibull_scale_base + self.weibull_scale_z <= 0:
            raise ValueError("Weibull scale must be positive for Z = 1")
        if self.trapezoid_heights not in ("subject", "ordered_rows"):
            raise ValueError("trapezoid_heights must be 'subject' or 'ordered_rows'")
        if self.n < 5:
            raise ValueError("n must be at least 5")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")

    @property
    def truth(self):
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


def _scenario_table():
    table = {}
    for family, levels in CENSORING_TARGETS.items():
        for level, (rate, _) in levels.items():
            for n in (100, 500, 1000, 2000):
                table[f"{family}-{level}-n{n}"] = ScenarioConfig(
                    n=n, x_family=family, censor_rate=rate)
    return table


SCENARIOS = _scenario_table()


def scenario(name, **overrides):
    """Look up a named scenario such as ``'weibull-extraheavy-n500'``."""
    try:
        base = SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(sorted(SCENARIOS))}")
    return replace(base, **overrides) if overrides else base


def _rng(seed, replicate, stream):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replicate, stream])))


def generate_dataset(config, replicate_index):
    """Draw one replicate.

    Returns
    -------
    data : CensoredData
        Outcome ``y``, observed ``w``, indicator ``delta`` and ``z`` (n x 1).
    x : ndarray
        The true covariate values, for the full-cohort fit.
    """
    n = config.n
    seed = config.seed
    z = _rng(seed, replicate_index, _STREAM_Z).binomial(1, 0.5, n).astype(float)
    gx = _rng(seed, replicate_index, _STREAM_X)
    if config.x_family == "weibull":
        scale = config.weibull_scale_base + config.weibull_scale_z * z
        x = scale * gx.weibull(config.weibull_shape, n)
    else:
        x = np.exp(gx.normal(config.lognormal_mean_z * z, math.sqrt(config.lognormal_var)))
    e = _rng(seed, replicate_index, _STREAM_E).standard_normal(n)
    y = config.alpha + config.beta * x + config.gamma * z + config.sigma * e
    c = _rng(seed, replicate_index, _STREAM_C).exponential(1.0 / config.censor_rate, n)
    w = np.minimum(x, c)
    delta = (x <= c).astype(np.int8)
    return CensoredData(y, w, delta, z.reshape(n, 1)), x


def _method_configs(config):
    return {
        "extrapolated": ImputationConfig(
            approach="extrapolated", extension_kind=config.extension_kind,
            interpolation=config.interpolation),
        "non_extrapolated": ImputationConfig(
            approach="non_extrapolated", interpolation=config.interpolation,
            trapezoid_heights=config.trapezoid_heights),
    }


def run_replicate(config, replicate_index):
    """Fit the three analyses on one replicate.

    Returns a dict with per-method coefficient arrays ``(alpha, beta, gamma)``
    (NaN when that method failed), the censored fraction, whether the tail fit
    fell back, and any error messages.
    """
    data, x = generate_dataset(config, replicate_index)
    out = {
        "censored_fraction": float(1.0 - data.delta.mean()),
        "fallback": None,
        "errors": {},
    }
    out["full_cohort"] = fit_ols(data.y, np.column_stack([x, data.z[:, 0]])).coef
    for method, cfg in _method_configs(config).items():
        try:
            imp = impute_dataset(data, cfg)
            coef = fit_ols(imp.data.y, np.column_stack([imp.data.w, imp.data.z[:, 0]])).coef
        except CensCovError as exc:
            out["errors"][method] = f"{type(exc).__name__}: {exc}"
            coef = np.full(3, np.nan)
        else:
            if method == "extrapolated" and cfg.extension_kind == "weibull":
                out["fallback"] = imp.curve.extension.used_fallback
        out[method] = coef
    return out


@dataclass(frozen=True)
class SummaryRow:
    parameter: str
    method: str
    bias: float
    percent_bias: float
    se: float
    relative_efficiency: float
    n_used: int


@dataclass(frozen=True)
class SimulationSummary:
    """Aggregated replicate results.

    ``se`` and ``relative_efficiency`` are NaN when fewer than two replicates
    are usable. ``extension_convergence_rate`` is NaN when no Weibull fit was
    attempted.
    """

    config: ScenarioConfig
    rows: tuple
    censor_rate_observed: float
    extension_convergence_rate: float
    n_replicates: int
    n_failed: dict
    estimates: dict = field(repr=False, compare=False)

    def row(self, parameter, method):
        for r in self.rows:
            if r.parameter == parameter and r.method == method:
                return r
        raise KeyError((parameter, method))

    def bias(self, parameter, method):
        return self.row(parameter, method).bias


def summarize(config, results):
    """Aggregate a list of :func:`run_replicate` outputs."""
    truth = config.truth
    estimates = {m: np.array([r[m] for r in results], dtype=float).reshape(-1, 3)
                 for m in METHODS}
    full_var = None
    rows = []
    for j, param in enumerate(PARAMETERS):
        col_full = estimates["full_cohort"][:, j]
        col_full = col_full[np.isfinite(col_full)]
        full_var = np.var(col_full, ddof=1) if col_full.size > 1 else math.nan
        for method in METHODS:
            col = estimates[method][:, j]
            col = col[np.isfinite(col)]
            if col.size == 0:
                rows.append(SummaryRow(param, method, math.nan, math.nan, math.nan,
                                       math.nan, 0))
                continue
            bias = float(col.mean() - truth[param])
            var = float(np.var(col, ddof=1)) if col.size > 1 else math.nan
            se = math.sqrt(var) if col.size > 1 else math.nan
            if method == "full_cohort":
                re = 1.0 if col.size > 1 else math.nan
            else:
                re = float(full_var / var) if col.size > 1 and var > 0 else math.nan
            rows.append(SummaryRow(param, method, bias, 100.0 * bias / truth[param], se,
                                   re, int(col.size)))
    fallbacks = [r["fallback"] for r in results if r["fallback"] is not None]
    conv = 1.0 - float(np.mean(fallbacks)) if fallbacks else math.nan
    failed = {m: int(sum(m in r["errors"] for r in results)) for m in METHODS}
    return SimulationSummary(
        config=config,
        rows=tuple(rows),
        censor_rate_observed=float(np.mean([r["censored_fraction"] for r in results])),
        extension_convergence_rate=conv,
        n_replicates=len(results),
        n_failed=failed,
        estimates=estimates,
    )


def _run_one(args):
    config, rep = args
    return run_replicate(config, rep)


def run_scenario(config, workers=None):
    """Run all replicates of a scenario and summarize them.

    Parameters
    ----------
    config : ScenarioConfig
    workers : int, optional
        Process count; ``None`` or ``1`` runs serially. Output is identical
        either way.

    Raises
    ------
    ScenarioFailed
        Every replicate failed for both imputation methods.
    """
    jobs = [(config, rep) for rep in range(config.replicates)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_run_one(job) for job in jobs]
    if all(len(r["errors"]) == 2 for r in results):
        raise ScenarioFailed(f"every replicate failed: {results[0]['errors']}")
    return summarize(config, results)
