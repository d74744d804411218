"""Ordinary least squares via pivoted QR, and the nested-model F-test."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .special import f_sf


class RankDeficientError(ValueError):
    """Raised when a design matrix does not have full column rank."""

    def __init__(self, dependent: Sequence[str]):
        self.dependent = list(dependent)
        super().__init__(f"design matrix is rank deficient; dependent columns: {', '.join(self.dependent)}")


@dataclass(frozen=True)
class OlsFit:
    coef: np.ndarray
    resid: np.ndarray
    rss: float
    dof: int
    se: np.ndarray

    @property
    def tvalues(self) -> np.ndarray:
        return self.coef / self.se

    @property
    def nobs(self) -> int:
        return self.resid.shape[0]


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: tuple = ()
    degenerate: bool = False
    method: str = ""
    extra: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class


def ols_fit(X, y, names: Sequence[str] | None = None, rcond: float | None = None) -> OlsFit:
    """Least-squares fit of ``y`` on the columns of ``X``.

    Parameters
    ----------
    X : array_like, shape (n, p)
        Design matrix. Include a column of ones for an intercept.
    y : array_like, shape (n,)
    names : sequence of str, optional
        Column names used in the rank-deficiency error message.
    rcond : float, optional
        Relative tolerance on the diagonal of R below which a pivoted
        column is considered dependent. Defaults to ``max(n, p) * eps``.

    Raises
    ------
    ValueError
        If ``n <= p``.
    RankDeficientError
        If ``X`` is not of full column rank.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more observations than regressors (n={n}, p={p})")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in regression inputs")

    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = (rcond if rcond is not None else max(n, p) * np.finfo(float).eps) * (diag[0] if p else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p or (p and diag[0] == 0.0):
        labels = list(names) if names is not None else [f"x{j}" for j in range(p)]
        raise RankDeficientError([labels[j] for j in sorted(piv[rank:])])

    beta_piv = linalg.solve_triangular(R, Q.T @ y)
    coef = np.empty(p)
    coef[piv] = beta_piv
    resid = y - X @ coef
    rss = float(resid @ resid)
    dof = n - p
    r_inv = linalg.solve_triangular(R, np.eye(p))
    var_piv = np.sum(r_inv**2, axis=1) * (rss / dof)
    se = np.empty(p)
    se[piv] = np.sqrt(var_piv)
    return OlsFit(coef=coef, resid=resid, rss=rss, dof=dof, se=se)


def f_test_nested(restricted: OlsFit, full: OlsFit, q: int) -> TestResult:
    """F-test of ``q`` linear exclusion restrictions, full vs restricted model.

    When the full model fits exactly (RSS 0) the p-value is 0 by convention
    and the result is flagged degenerate.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    if restricted.nobs != full.nobs:
        raise ValueError("restricted and full fits use different samples")
    dof = full.dof
    if full.rss <= 0.0:
        return TestResult(np.inf, 0.0, (q, dof), degenerate=True, method="F")
    diff = max(restricted.rss - full.rss, 0.0)
    stat = (diff / q) / (full.rss / dof)
    return TestResult(float(stat), f_sf(stat, q, dof), (q, dof), method="F")
