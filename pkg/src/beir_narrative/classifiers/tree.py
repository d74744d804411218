"""Array-backed binary decision trees shared by the forest and boosting models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import predict_tree


@dataclass(frozen=True)
class Tree:
    """Node arrays; ``feature[i] == -1`` marks a leaf holding ``value[i]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def from_kernel(cls, feature, threshold, left, right, value, n_nodes):
        return cls(feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(), right[:n_nodes].copy(), value[:n_nodes].copy())

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def predict(self, X) -> np.ndarray:
        return predict_tree(np.ascontiguousarray(X, dtype=float), self.feature, self.threshold, self.left, self.right, self.value)

    def to_params(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_params(cls, d) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
        )


def normalized(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    s = v.sum()
    return v / s if s > 0 else np.zeros_like(v)
