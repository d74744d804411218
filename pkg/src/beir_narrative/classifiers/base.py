"""Uniform train / predict / importance interface over the five classifier kinds."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

KINDS = ("LG", "SV", "RF", "XG", "MLP")
FORMAT_VERSION = 1

DEFAULT_PARAMS = {
    "LG": {"C": 1.0, "tol": 1e-6, "max_iter": 1000},
    "SV": {"C": 1.0, "gamma": "scale", "tol": 1e-3, "max_iter": 1_000_000},
    "RF": {"n_trees": 50, "min_samples_split": 2, "max_features": "sqrt", "bootstrap": True, "max_depth": None},
    "XG": {
        "n_rounds": 100,
        "eta": 0.3,
        "max_depth": 10,
        "reg_lambda": 1.0,
        "min_child_weight": 1.0,
        "gamma": 0.0,
        "base_score": 0.5,
    },
    "MLP": {
        "hidden": [10] * 10,
        "solver": "adam",
        "lr": 1e-3,
        "epochs": 200,
        "batch_size": 32,
        "alpha": 1e-4,
        "tol": 1e-4,
        "n_iter_no_change": 10,
    },
}


class ClassifierError(ValueError):
    pass


class ConvergenceError(ClassifierError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class Importance(NamedTuple):
    score: float
    p_value: float | None = None


def _check_positive(params, key, integer=False, allow_zero=False):
    v = params[key]
    ok_type = isinstance(v, (int, np.integer)) if integer else isinstance(v, (int, float, np.number))
    if isinstance(v, bool) or not ok_type or (v < 0 if allow_zero else v <= 0):
        raise ClassifierError(f"{key} must be a {'nonnegative' if allow_zero else 'positive'} {'integer' if integer else 'number'}, got {v!r}")


def validate_params(kind: str, params: dict) -> dict:
    if kind not in KINDS:
        raise ClassifierError(f"unknown classifier kind {kind!r}; expected one of {', '.join(KINDS)}")
    merged = dict(DEFAULT_PARAMS[kind])
    unknown = set(params) - set(merged)
    if unknown:
        raise ClassifierError(f"unknown {kind} parameter(s): {', '.join(sorted(unknown))}")
    merged.update(params)
    if kind == "LG":
        _check_positive(merged, "C")
        _check_positive(merged, "tol")
        _check_positive(merged, "max_iter", integer=True)
    elif kind == "SV":
        _check_positive(merged, "C")
        _check_positive(merged, "tol")
        _check_positive(merged, "max_iter", integer=True)
        if merged["gamma"] != "scale":
            _check_positive(merged, "gamma")
    elif kind == "RF":
        _check_positive(merged, "n_trees", integer=True)
        _check_positive(merged, "min_samples_split", integer=True)
        if merged["min_samples_split"] < 2:
            raise ClassifierError("min_samples_split must be >= 2")
        if merged["max_features"] != "sqrt":
            _check_positive(merged, "max_features", integer=True)
        if merged["max_depth"] is not None:
            _check_positive(merged, "max_depth", integer=True)
    elif kind == "XG":
        _check_positive(merged, "n_rounds", integer=True)
        _check_positive(merged, "eta")
        _check_positive(merged, "max_depth", integer=True)
        _check_positive(merged, "reg_lambda", allow_zero=True)
        _check_positive(merged, "min_child_weight", allow_zero=True)
        _check_positive(merged, "gamma", allow_zero=True)
        if not 0 < merged["base_score"] < 1:
            raise ClassifierError("base_score must lie in (0, 1)")
    elif kind == "MLP":
        hidden = merged["hidden"]
        if not hidden or any(isinstance(u, bool) or not isinstance(u, (int, np.integer)) or u < 1 for u in hidden):
            raise ClassifierError("hidden must be a nonempty list of positive layer widths")
        merged["hidden"] = [int(u) for u in hidden]
        if merged["solver"] not in ("adam", "lbfgs"):
            raise ClassifierError("solver must be 'adam' or 'lbfgs'")
        for key in ("lr", "tol"):
            _check_positive(merged, key)
        _check_positive(merged, "alpha", allow_zero=True)
        for key in ("epochs", "batch_size", "n_iter_no_change"):
            _check_positive(merged, key, integer=True)
    return merged


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "params", validate_params(self.kind, dict(self.params)))
        if not 0 <= int(self.seed) < 2**64:
            raise ClassifierError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "seed": int(self.seed)}


def _model_class(kind):
    # imported lazily so the compiled kernels load only when needed
    if kind == "LG":
        from .logistic import LogisticModel as cls
    elif kind == "SV":
        from .svm import SvmModel as cls
    elif kind == "RF":
        from .forest import ForestModel as cls
    elif kind == "XG":
        from .boosting import BoostingModel as cls
    else:
        from .mlp import MlpModel as cls
    return cls


def _as_matrix(X, n_columns=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, n_columns or 0)
    if X.ndim != 2:
        raise ClassifierError(f"X must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ClassifierError("X contains non-finite values")
    return X


@dataclass(frozen=True)
class TrainedClassifier:
    kind: str
    spec: ClassifierSpec
    columns: tuple[str, ...]
    model: object

    def _check(self, X, columns):
        if columns is not None and tuple(columns) != self.columns:
            missing = [c for c in self.columns if c not in columns]
            extra = [c for c in columns if c not in self.columns]
            raise ClassifierError(f"column mismatch: missing {missing}, extra {extra}" if missing or extra else "column order differs from training")
        X = _as_matrix(X, len(self.columns))
        if X.shape[1] != len(self.columns):
            raise ClassifierError(f"expected {len(self.columns)} columns, got {X.shape[1]}")
        return X

    def predict_proba(self, X, columns: Sequence[str] | None = None) -> np.ndarray:
        """Class-1 probabilities."""
        X = self._check(X, columns)
        if X.shape[0] == 0:
            return np.zeros(0)
        return np.clip(self.model.predict_proba(X), 0.0, 1.0)

    def predict(self, X, columns: Sequence[str] | None = None) -> np.ndarray:
        return (self.predict_proba(X, columns) >= 0.5).astype(np.int8)

    def feature_importance(self) -> dict[str, Importance]:
        """|coefficient| with Wald p-values (LG) or normalized split gain (RF, XG)."""
        if self.kind not in ("LG", "RF", "XG"):
            raise ClassifierError(f"feature importance is not defined for kind {self.kind}")
        scores, pvals = self.model.importance()
        return {c: Importance(float(s), None if pvals is None else float(pvals[i])) for i, (c, s) in enumerate(zip(self.columns, scores))}

    def to_json(self) -> str:
        env = {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "spec": self.spec.to_dict(),
            "columns": list(self.columns),
            "seed": int(self.spec.seed),
            "parameters": self.model.to_params(),
        }
        return json.dumps(env, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainedClassifier":
        env = json.loads(text)
        if env.get("format_version") != FORMAT_VERSION:
            raise ClassifierError(f"unsupported model format version {env.get('format_version')!r}")
        spec = ClassifierSpec(env["spec"]["kind"], env["spec"]["params"], env["spec"]["seed"])
        model = _model_class(env["kind"]).from_params(env["parameters"])
        return cls(env["kind"], spec, tuple(env["columns"]), model)


def train(spec: ClassifierSpec, X, y, columns: Sequence[str] | None = None) -> TrainedClassifier:
    """Fit a classifier of ``spec.kind`` on standardized ``X`` and 0/1 ``y``."""
    X = _as_matrix(X)
    y = np.asarray(y).ravel()
    if y.shape[0] != X.shape[0]:
        raise ClassifierError("X and y have different lengths")
    if not np.all((y == 0) | (y == 1)):
        raise ClassifierError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if y.size == 0 or y.min() == y.max():
        raise ClassifierError("training labels contain a single class")
    if columns is None:
        columns = tuple(f"x{j}" for j in range(X.shape[1]))
    columns = tuple(columns)
    if len(columns) != X.shape[1] or len(set(columns)) != len(columns):
        raise ClassifierError("columns must be unique and match X")
    rng = np.random.default_rng(int(spec.seed))
    model = _model_class(spec.kind).fit(X, y, spec.params, rng)
    return TrainedClassifier(spec.kind, spec, columns, model)
