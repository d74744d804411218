from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float
    # names of metrics whose denominator was zero (reported as 0)
    undefined: tuple[str, ...] = ()

    def as_tuple(self) -> tuple[float, float, float]:
        return self.precision, self.recall, self.f1


def confusion(preds, truth, positive_class=1) -> tuple[int, int, int, int]:
    """Return ``(tp, fp, fn, tn)``."""
    p = np.asarray(preds).ravel() == positive_class
    t = np.asarray(truth).ravel() == positive_class
    if p.shape != t.shape:
        raise ValueError("preds and truth differ in length")
    return (int(np.sum(p & t)), int(np.sum(p & ~t)), int(np.sum(~p & t)), int(np.sum(~p & ~t)))


def precision_recall_f1(preds, truth, positive_class=1) -> Scores:
    preds = np.asarray(preds).ravel()
    if preds.size == 0:
        raise ValueError("empty prediction vector")
    tp, fp, fn, _ = confusion(preds, truth, positive_class)
    undefined = []
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        undefined.append("precision")
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        undefined.append("recall")
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        undefined.append("f1")
    return Scores(precision, recall, f1, tuple(undefined))
