"""Five classifier families behind one train / predict interface."""

from .base import (
    DEFAULT_PARAMS,
    KINDS,
    ClassifierError,
    ClassifierSpec,
    ConvergenceError,
    Importance,
    TrainedClassifier,
    train,
)

__all__ = [
    "DEFAULT_PARAMS",
    "KINDS",
    "ClassifierError",
    "ClassifierSpec",
    "ConvergenceError",
    "Importance",
    "TrainedClassifier",
    "train",
]
