"""L2-penalized logistic regression solved by limited-memory quasi-Newton."""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from ..stats.special import norm_sf
from .base import ConvergenceError


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def logistic_objective(theta, X, y, C):
    """Penalized negative log-likelihood ``C * sum(loss) + ||w||^2 / 2`` and its gradient.

    ``theta`` is ``[w..., b]``; the intercept is not penalized.
    """
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    loss = C * np.sum(_log1pexp(z) - y * z) + 0.5 * w @ w
    r = C * (expit(z) - y)
    grad = np.empty_like(theta)
    grad[:-1] = X.T @ r + w
    grad[-1] = r.sum()
    return loss, grad


def _hessian(theta, X, C):
    Xt = np.hstack([X, np.ones((X.shape[0], 1))])
    p = expit(Xt @ theta)
    H = C * (Xt.T * (p * (1 - p))) @ Xt
    H[np.arange(X.shape[1]), np.arange(X.shape[1])] += 1.0
    return H


class LogisticModel:
    def __init__(self, coef, intercept, C, wald_p=None, n_iter=0):
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = float(intercept)
        self.C = float(C)
        self.wald_p = None if wald_p is None else np.asarray(wald_p, dtype=float)
        self.n_iter = n_iter

    @classmethod
    def fit(cls, X, y, params, rng=None):
        C, tol, max_iter = params["C"], params["tol"], params["max_iter"]
        y = y.astype(float)
        p = X.shape[1]
        theta0 = np.zeros(p + 1)
        res = minimize(
            logistic_objective,
            theta0,
            args=(X, y, C),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": max_iter, "gtol": tol * 1e-3, "ftol": 0.0, "maxcor": 20},
        )
        theta = res.x
        _, g = logistic_objective(theta, X, y, C)
        # a few damped Newton steps settle the remaining gradient
        steps = 0
        while np.max(np.abs(g)) >= tol * 0.1 and steps < 50:
            H = _hessian(theta, X, C)
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                break
            f0, _ = logistic_objective(theta, X, y, C)
            t = 1.0
            while t > 1e-10:
                f1, _ = logistic_objective(theta - t * step, X, y, C)
                if f1 <= f0 - 1e-4 * t * (g @ step):
                    break
                t *= 0.5
            theta = theta - t * step
            _, g = logistic_objective(theta, X, y, C)
            steps += 1
        gnorm = float(np.max(np.abs(g)))
        if not np.all(np.isfinite(theta)) or gnorm >= tol:
            raise ConvergenceError(
                f"logistic regression did not converge: |grad|_inf = {gnorm:.3g} after {res.nit} quasi-Newton and {steps} Newton iterations",
                {"grad_inf": gnorm, "lbfgs_iterations": int(res.nit), "newton_steps": steps, "message": str(res.message)},
            )
        model = cls(theta[:-1], theta[-1], C, n_iter=int(res.nit) + steps)
        model.wald_p = model._wald(X)
        return model

    def _wald(self, X):
        # covariance of the penalized estimate in log-likelihood units
        theta = np.r_[self.coef, self.intercept]
        H = _hessian(theta, X, self.C) / self.C
        try:
            cov = np.linalg.inv(H)
        except np.linalg.LinAlgError:
            return np.full(self.coef.size, np.nan)
        se = np.sqrt(np.clip(np.diag(cov)[:-1], 0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(self.coef) / se
        return np.array([2.0 * norm_sf(v) if np.isfinite(v) else np.nan for v in z])

    def decision_function(self, X):
        return X @ self.coef + self.intercept

    def predict_proba(self, X):
        return expit(self.decision_function(X))

    def importance(self):
        return np.abs(self.coef), self.wald_p

    def to_params(self):
        return {
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "C": self.C,
            "wald_p": None if self.wald_p is None else self.wald_p.tolist(),
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_params(cls, d):
        return cls(d["coef"], d["intercept"], d["C"], d.get("wald_p"), d.get("n_iter", 0))
