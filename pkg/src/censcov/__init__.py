"""Conditional mean imputation of right-censored covariates with an
extrapolated Breslow survival curve."""

__version__ = "0.1.0"

from .cox import (
    BaselineSurvival,
    CensoredData,
    CensoredRecord,
    CoxFit,
    SurvivalCurve,
    breslow_baseline,
    eval_survival,
    fit_cox,
)
from .errors import CensCovError
from .imputation import (
    ImputationConfig,
    ImputedDataset,
    conditional_mean,
    fit_survival_curve,
    impute_dataset,
)
from .quadrature import IntegralResult, integrate_survival, trapezoid_over_knots, trapezoid_over_rows
from .regression import RegressionFit, fit_ols, sandwich_cov, wald_ci
from .simulation import ScenarioConfig, SimulationSummary, generate_dataset, run_scenario, scenario
from .tail import TailExtension, eval_extension, fit_extension, tail_integral
