"""Market-only logistic baseline, its residuals, and SIMPLS components of the theme panel."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classifiers import ClassifierSpec, TrainedClassifier, train
from .taxonomy import DESCRIPTIVE, RETAINED, ThemeTaxonomy

log = logging.getLogger(__name__)

MIN_BASELINE_OBS = 100
RESIDUAL_KINDS = ("response", "pearson", "deviance")


class PlsError(ValueError):
    pass


class EarlyStopWarning(UserWarning):
    pass


# --- baseline -----------------------------------------------------------------

@dataclass(frozen=True)
class Baseline:
    model: TrainedClassifier
    residuals: np.ndarray
    fitted: np.ndarray


def residuals(y, p, kind: str = "response") -> np.ndarray:
    """Residuals of class-1 probabilities ``p`` against 0/1 labels ``y``."""
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    if kind == "response":
        return y - p
    pc = np.clip(p, 1e-12, 1 - 1e-12)
    if kind == "pearson":
        return (y - pc) / np.sqrt(pc * (1 - pc))
    if kind == "deviance":
        dev = -2 * (y * np.log(pc) + (1 - y) * np.log(1 - pc))
        return np.sign(y - pc) * np.sqrt(dev)
    raise PlsError(f"unknown residual kind {kind!r}; expected one of {', '.join(RESIDUAL_KINDS)}")


def fit_baseline(market_X, y, columns: Sequence[str] | None = None, spec: ClassifierSpec | None = None, residual: str = "response") -> Baseline:
    """Logistic regression of the labels on market features, plus its residuals."""
    X = np.asarray(market_X, dtype=float)
    if X.shape[0] < MIN_BASELINE_OBS:
        raise PlsError(f"baseline needs at least {MIN_BASELINE_OBS} observations, got {X.shape[0]}")
    spec = spec or ClassifierSpec("LG")
    if spec.kind != "LG":
        raise PlsError("the baseline must be a logistic regression")
    model = train(spec, X, y, columns)
    p = model.predict_proba(X)
    return Baseline(model, residuals(y, p, residual), p)


# --- SIMPLS ---------------------------------------------------------------------

@dataclass(frozen=True)
class PlsModel:
    """Single-response SIMPLS fit.

    ``weights`` (R) map centered X to unit-norm, mutually orthogonal scores
    ``T = (X - mean) R``; ``x_loadings`` = X'T, ``y_loadings`` = y'T.
    ``covariance[a]`` is the norm of the deflated cross-product vector that
    component ``a`` maximizes, which never increases with ``a``.
    """

    columns: tuple[str, ...]
    mean: np.ndarray
    weights: np.ndarray
    x_loadings: np.ndarray
    y_loadings: np.ndarray
    explained: np.ndarray
    covariance: np.ndarray
    scores: np.ndarray = field(repr=False, default=None)
    n_requested: int = 5
    taxonomy_digest: str = ""

    @property
    def n_components(self) -> int:
        return self.weights.shape[1]

    def transform(self, X_new, columns: Sequence[str] | None = None) -> np.ndarray:
        """Scores of new rows, after reordering columns to the training order."""
        X = np.asarray(X_new, dtype=float)
        if columns is not None:
            columns = tuple(columns)
            if columns != self.columns:
                missing = sorted(set(self.columns) - set(columns))
                extra = sorted(set(columns) - set(self.columns))
                if missing or extra or len(columns) != len(self.columns):
                    raise PlsError(f"column mismatch: missing {missing}, extra {extra}")
                pos = {c: j for j, c in enumerate(columns)}
                X = X[:, [pos[c] for c in self.columns]]
        if X.ndim != 2 or X.shape[1] != len(self.columns):
            raise PlsError(f"expected {len(self.columns)} columns, got shape {X.shape}")
        return (X - self.mean) @ self.weights

    def to_json(self) -> str:
        return json.dumps(
            {
                "columns": list(self.columns),
                "mean": self.mean.tolist(),
                "weights": self.weights.tolist(),
                "x_loadings": self.x_loadings.tolist(),
                "y_loadings": self.y_loadings.tolist(),
                "explained": self.explained.tolist(),
                "covariance": self.covariance.tolist(),
                "n_requested": self.n_requested,
                "taxonomy_digest": self.taxonomy_digest,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PlsModel":
        d = json.loads(text)
        p = len(d["columns"])
        return cls(
            tuple(d["columns"]),
            np.asarray(d["mean"], dtype=float),
            np.asarray(d["weights"], dtype=float).reshape(p, -1),
            np.asarray(d["x_loadings"], dtype=float).reshape(p, -1),
            np.asarray(d["y_loadings"], dtype=float),
            np.asarray(d["explained"], dtype=float),
            np.asarray(d["covariance"], dtype=float),
            None,
            d["n_requested"],
            d["taxonomy_digest"],
        )


def fit_pls(X, target, n_components: int = 5, columns: Sequence[str] | None = None, taxonomy_digest: str = "", rtol: float = 1e-10) -> PlsModel:
    """SIMPLS with one response.

    X is centered here (means are stored) but not rescaled. Extraction stops
    early, with an ``EarlyStopWarning``, when the deflated cross-product
    vanishes or a score has zero norm.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(target, dtype=float).ravel()
    n, p = X.shape
    if y.size != n:
        raise PlsError("X and target lengths differ")
    if n_components < 1:
        raise PlsError("n_components must be >= 1")
    if n <= n_components:
        raise PlsError(f"need more rows than components ({n} <= {n_components})")
    columns = tuple(columns) if columns is not None else tuple(f"x{j}" for j in range(p))
    if len(columns) != p:
        raise PlsError("columns must match X")
    mean = X.mean(axis=0)
    X0 = X - mean
    y0 = y - y.mean()
    s = X0.T @ y0
    s0 = np.linalg.norm(s)
    xscale = np.linalg.norm(X0)
    R, T, P, Q, V, cov = [], [], [], [], [], []
    for a in range(n_components):
        snorm = np.linalg.norm(s)
        if s0 == 0 or snorm <= rtol * s0:
            break
        r = s.copy()
        t = X0 @ r
        tnorm = np.linalg.norm(t)
        if tnorm <= rtol * xscale * np.linalg.norm(r):
            break
        t /= tnorm
        r /= tnorm
        pa = X0.T @ t
        qa = y0 @ t
        v = pa.copy()
        for vb in V:
            v -= vb * (vb @ pa)
        # second pass keeps the basis orthogonal in floating point
        for vb in V:
            v -= vb * (vb @ v)
        vnorm = np.linalg.norm(v)
        if vnorm == 0:
            break
        v /= vnorm
        s = s - v * (v @ s)
        R.append(r)
        T.append(t)
        P.append(pa)
        Q.append(qa)
        V.append(v)
        cov.append(snorm / max(n - 1, 1))
    A = len(R)
    if A < n_components:
        msg = f"SIMPLS stopped after {A} of {n_components} components (no remaining cross-covariance)"
        warnings.warn(msg, EarlyStopWarning, stacklevel=2)
        log.warning(msg)
    if A == 0:
        raise PlsError("no PLS component could be extracted (zero cross-covariance)")
    yy = float(y0 @ y0)
    Q = np.asarray(Q)
    explained = Q**2 / yy if yy > 0 else np.zeros(A)
    return PlsModel(
        columns=columns,
        mean=mean,
        weights=np.column_stack(R),
        x_loadings=np.column_stack(P),
        y_loadings=Q,
        explained=explained,
        covariance=np.asarray(cov),
        scores=np.column_stack(T),
        n_requested=n_components,
        taxonomy_digest=taxonomy_digest,
    )


def transform(model: PlsModel, X_new, columns: Sequence[str] | None = None) -> np.ndarray:
    return model.transform(X_new, columns)


def explained_variance_check(model: PlsModel, threshold: float = 0.80) -> tuple[bool, np.ndarray]:
    """Whether the components jointly explain at least ``threshold`` of the target variance."""
    fr = np.asarray(model.explained, dtype=float)
    return bool(fr.sum() >= threshold), fr.copy()


# --- category profiles -------------------------------------------------------------

def category_profile(model: PlsModel, tax: ThemeTaxonomy, component: int = 0) -> dict[str, float]:
    """Share of absolute x-loading mass per retained category for one component.

    ``component`` is 0-based. Unmapped themes report under Action; themes in
    descriptive categories (if any slipped through) are ignored.
    """
    if not 0 <= component < model.n_components:
        raise PlsError(f"component {component} out of range for a {model.n_components}-component model")
    mass = dict.fromkeys(RETAINED, 0.0)
    load = np.abs(model.x_loadings[:, component])
    for name, v in zip(model.columns, load):
        cat = tax.report_category(name)
        if cat in DESCRIPTIVE:
            continue
        mass[cat] += float(v)
    total = sum(mass.values())
    if total == 0:
        return {c: 0.0 for c in mass}
    return {c: m / total for c, m in mass.items()}


def max_abs_correlation(A, B) -> float:
    """Largest |Pearson correlation| between any column of A and any column of B."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.size == 0 or B.size == 0:
        return 0.0
    a = A - A.mean(axis=0)
    b = B - B.mean(axis=0)
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    ok_a, ok_b = na > 0, nb > 0
    if not ok_a.any() or not ok_b.any():
        return 0.0
    c = (a[:, ok_a] / na[ok_a]).T @ (b[:, ok_b] / nb[ok_b])
    return float(np.max(np.abs(c)))
