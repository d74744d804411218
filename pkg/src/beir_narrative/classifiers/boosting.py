"""Gradient-boosted regression trees on the logistic loss (second-order, exact greedy)."""

from __future__ import annotations

import numpy as np
from scipy.special import expit, logit

from ._kernels import grow_boost_tree
from .tree import Tree, normalized


class BoostingModel:
    def __init__(self, trees, base_margin, gain):
        self.trees = list(trees)
        self.base_margin = float(base_margin)
        self.gain = np.asarray(gain, dtype=float)

    @classmethod
    def fit(cls, X, y, params, rng=None):
        X = np.ascontiguousarray(X, dtype=float)
        y = y.astype(float)
        base = float(logit(params["base_score"]))
        margin = np.full(X.shape[0], base)
        gain = np.zeros(X.shape[1])
        trees = []
        for _ in range(params["n_rounds"]):
            p = expit(margin)
            g = p - y
            h = p * (1.0 - p)
            out = grow_boost_tree(
                X, g, h, int(params["max_depth"]), float(params["reg_lambda"]),
                float(params["min_child_weight"]), float(params["gamma"]), float(params["eta"]),
            )
            tree = Tree.from_kernel(*out[:6])
            trees.append(tree)
            gain += out[6]
            margin += tree.predict(X)
        return cls(trees, base, gain)

    def margin(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        out = np.full(X.shape[0], self.base_margin)
        for t in self.trees:
            out += t.predict(X)
        return out

    def predict_proba(self, X):
        return expit(self.margin(X))

    def importance(self):
        return normalized(self.gain), None

    def to_params(self):
        return {"base_margin": self.base_margin, "gain": self.gain.tolist(), "trees": [t.to_params() for t in self.trees]}

    @classmethod
    def from_params(cls, d):
        return cls([Tree.from_params(t) for t in d["trees"]], d["base_margin"], d["gain"])
