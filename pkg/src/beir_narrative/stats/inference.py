"""Multiple-testing correction and paired classifier comparison."""

from __future__ import annotations

import numpy as np

from .ols import TestResult
from .special import binom_two_sided_half, chi2_sf

MCNEMAR_EXACT_BELOW = 25


def bh_adjust(p_values, alpha: float = 0.05):
    """Benjamini-Hochberg step-up adjustment.

    Returns ``(adjusted, reject)`` where ``adjusted[i] = min_{j >= r(i)}
    m * p_(j) / j`` clipped to 1 and ``reject = adjusted <= alpha``. The
    result does not depend on the input order.
    """
    p = np.asarray(p_values, dtype=float).ravel()
    if p.size == 0:
        return p.copy(), np.zeros(0, dtype=bool)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adj_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted = np.empty(m)
    adjusted[order] = np.minimum(adj_sorted, 1.0)
    below = np.nonzero(p[order] <= np.arange(1, m + 1) * alpha / m)[0]
    reject = np.zeros(m, dtype=bool)
    if below.size:
        reject[order[: below[-1] + 1]] = True
    return adjusted, reject


def discordant_counts(model_preds, benchmark_preds, truth) -> tuple[int, int]:
    """Return ``(b, c)``: b = model right & benchmark wrong, c = the reverse."""
    a = np.asarray(model_preds).ravel()
    bm = np.asarray(benchmark_preds).ravel()
    t = np.asarray(truth).ravel()
    if not (a.shape == bm.shape == t.shape):
        raise ValueError("prediction and truth vectors must have equal length")
    model_ok = a == t
    bench_ok = bm == t
    return int(np.sum(model_ok & ~bench_ok)), int(np.sum(~model_ok & bench_ok))


def mcnemar_from_counts(b: int, c: int, variant: str = "auto") -> TestResult:
    """McNemar test from discordant counts.

    ``variant`` is ``"auto"`` (exact below 25 discordant pairs, corrected
    chi-square otherwise), ``"chi2"`` or ``"exact"``.
    """
    if variant not in ("auto", "chi2", "exact"):
        raise ValueError(f"unknown McNemar variant {variant!r}")
    n = b + c
    if n == 0:
        return TestResult(0.0, 1.0, (1,), degenerate=True, method="mcnemar", extra={"b": 0, "c": 0})
    if variant == "exact" or (variant == "auto" and n < MCNEMAR_EXACT_BELOW):
        # exact branch reports the smaller discordant count as its statistic
        return TestResult(
            float(min(b, c)), binom_two_sided_half(min(b, c), n), (), method="mcnemar-exact",
            extra={"b": b, "c": c},
        )
    stat = max(abs(b - c) - 1, 0) ** 2 / n
    return TestResult(float(stat), chi2_sf(stat, 1), (1,), method="mcnemar-chi2", extra={"b": b, "c": c})


def mcnemar(model_preds, benchmark_preds, truth, variant: str = "auto") -> TestResult:
    """McNemar test of two classifiers scored against the same truth labels.

    Continuity-corrected chi-square with one degree of freedom when the
    discordant total ``b + c`` is at least 25, exact two-sided binomial
    otherwise.
    """
    b, c = discordant_counts(model_preds, benchmark_preds, truth)
    return mcnemar_from_counts(b, c, variant)
