"""Ordinary least squares with heteroskedasticity-robust (sandwich) covariance."""

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .errors import RankDeficient, TooFewRows

__all__ = ["RegressionFit", "fit_ols", "sandwich_cov", "wald_ci", "design_matrix"]

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class RegressionFit:
    """OLS coefficients (intercept first when present), residual variance
    ``sigma2 = RSS / (n - k)`` and both covariance estimates."""

    coef: np.ndarray
    sigma2: float
    cov_sandwich: np.ndarray
    cov_classical: np.ndarray
    n: int
    names: tuple
    residuals: np.ndarray
    sandwich_kind: str = "HC0"

    @property
    def theta(self):
        """``(alpha, beta, gamma..., sigma2)``."""
        return np.append(self.coef, self.sigma2)

    @property
    def se_sandwich(self):
        return np.sqrt(np.clip(np.diag(self.cov_sandwich), 0, None))

    @property
    def se_classical(self):
        return np.sqrt(np.clip(np.diag(self.cov_classical), 0, None))

    def __getitem__(self, name):
        return self.coef[self.names.index(name)]


def design_matrix(X, intercept=True):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    return X


def _qr(D):
    n, k = D.shape
    if n <= k:
        raise TooFewRows(f"need more rows than columns (n={n}, k={k})")
    q, r = linalg.qr(D, mode="economic")
    diag = np.abs(np.diag(r))
    col_norms = np.linalg.norm(D, axis=0)
    scale = max(float(col_norms.max()), 1.0)
    for j in range(k):
        if diag[j] <= _RANK_TOL * max(col_norms[j], scale * 1e-3):
            raise RankDeficient(
                f"design column {j} is (numerically) a linear combination of earlier columns",
                column=j,
            )
    return q, r


def _bread(r):
    r_inv = linalg.solve_triangular(r, np.eye(r.shape[0]))
    return r_inv @ r_inv.T


def sandwich_cov(D, residuals, kind="HC0"):
    """Sandwich ``(D'D)^-1 D' diag(r^2) D (D'D)^-1``.

    ``D`` is the full design (intercept column included). ``kind='HC1'``
    applies the ``n / (n - k)`` small-sample factor.
    """
    D = np.asarray(D, dtype=float)
    residuals = np.asarray(residuals, dtype=float).reshape(-1)
    _, r = _qr(D)
    bread = _bread(r)
    meat = (D * residuals[:, None] ** 2).T @ D
    cov = bread @ meat @ bread
    if kind == "HC1":
        n, k = D.shape
        cov = cov * n / (n - k)
    elif kind != "HC0":
        raise ValueError("kind must be 'HC0' or 'HC1'")
    return 0.5 * (cov + cov.T)


def fit_ols(y, X, intercept=True, names=None, sandwich_kind="HC0"):
    """Least-squares fit of ``y`` on ``X`` via a QR decomposition.

    Parameters
    ----------
    y : array_like, shape (n,)
    X : array_like, shape (n, p)
        Regressors without the intercept column (it is prepended when
        ``intercept`` is true). ``p`` may be zero.
    names : sequence of str, optional
        Column names for ``X``; ``'intercept'`` is prepended automatically.

    Raises
    ------
    TooFewRows
        ``n`` does not exceed the number of coefficients.
    RankDeficient
        A design column is collinear with earlier ones.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if X.size else X.reshape(y.shape[0], 0)
    D = design_matrix(X, intercept)
    if D.shape[0] != y.shape[0]:
        raise ValueError("X and y have different numbers of rows")
    q, r = _qr(D)
    coef = linalg.solve_triangular(r, q.T @ y)
    resid = y - D @ coef
    n, k = D.shape
    sigma2 = float(resid @ resid) / (n - k)
    bread = _bread(r)
    cov_classical = sigma2 * bread
    cov_sand = sandwich_cov(D, resid, sandwich_kind)

    if names is None:
        names = [f"x{j + 1}" for j in range(X.shape[1])]
    names = tuple((["intercept"] if intercept else []) + list(names))
    if len(names) != k:
        raise ValueError("names must match the number of columns of X")
    return RegressionFit(coef, sigma2, cov_sand, 0.5 * (cov_classical + cov_classical.T),
                         n, names, resid, sandwich_kind)


def wald_ci(fit, level=0.95):
    """Normal-quantile Wald intervals from the sandwich standard errors.

    Returns an ``(k, 2)`` array of lower and upper limits.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    q = stats.norm.ppf(0.5 + level / 2)
    half = q * fit.se_sandwich
    return np.column_stack([fit.coef - half, fit.coef + half])
