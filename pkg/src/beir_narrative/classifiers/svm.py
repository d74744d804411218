"""RBF-kernel soft-margin SVM with a logistic link on the decision value."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit

from ._kernels import smo_solve
from .base import ConvergenceError


def rbf_kernel(A, B, gamma):
    return np.exp(-gamma * cdist(A, B, "sqeuclidean"))


def platt_fit(f, y, max_iter=100):
    """Fit ``P(y=1 | f) = 1 / (1 + exp(A f + B))`` by Newton's method.

    Uses the regularized targets and backtracking safeguard of Lin, Lin
    and Weng's revision of Platt's procedure.
    """
    f = np.asarray(f, dtype=float)
    y = np.asarray(y)
    n_pos = float(np.sum(y == 1))
    n_neg = float(y.size - n_pos)
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(y == 1, hi, lo)
    A, B = 0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))
    sigma, eps = 1e-12, 1e-5

    def objective(A, B):
        z = f * A + B
        return np.sum(t * z + np.logaddexp(0.0, -z))

    fval = objective(A, B)
    for _ in range(max_iter):
        z = f * A + B
        p = expit(-z)
        q = 1 - p
        d2 = p * q
        h11 = sigma + np.sum(f * f * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1 = np.sum(f * d1)
        g2 = np.sum(d1)
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2
        else:
            break
    return float(A), float(B)


class SvmModel:
    def __init__(self, support, dual_coef, rho, gamma, platt_a, platt_b, n_iter=0):
        self.support = np.asarray(support, dtype=float)
        self.dual_coef = np.asarray(dual_coef, dtype=float)  # alpha_i * y_i
        self.rho = float(rho)
        self.gamma = float(gamma)
        self.platt_a = float(platt_a)
        self.platt_b = float(platt_b)
        self.n_iter = n_iter

    @classmethod
    def fit(cls, X, y, params, rng=None):
        gamma = params["gamma"]
        if gamma == "scale":
            var = X.var()
            gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        ys = np.where(y == 1, 1.0, -1.0)
        K = rbf_kernel(X, X, gamma)
        alpha, rho, it, ok = smo_solve(K, ys, float(params["C"]), float(params["tol"]), int(params["max_iter"]))
        if not ok:
            raise ConvergenceError(f"SMO stopped after {it} iterations without meeting tol", {"iterations": it})
        sv = alpha > 0
        coef = alpha[sv] * ys[sv]
        dec = K[:, sv] @ coef - rho
        a, b = platt_fit(dec, y)
        return cls(X[sv], coef, rho, gamma, a, b, it)

    def decision_function(self, X):
        return rbf_kernel(X, self.support, self.gamma) @ self.dual_coef - self.rho

    def predict_proba(self, X):
        return expit(-(self.decision_function(X) * self.platt_a + self.platt_b))

    def to_params(self):
        return {
            "support": self.support.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "rho": self.rho,
            "gamma": self.gamma,
            "platt_a": self.platt_a,
            "platt_b": self.platt_b,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_params(cls, d):
        return cls(d["support"], d["dual_coef"], d["rho"], d["gamma"], d["platt_a"], d["platt_b"], d.get("n_iter", 0))
