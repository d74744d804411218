"""Random forest of fully grown Gini trees on bootstrap samples."""

from __future__ import annotations

import math

import numpy as np

from ._kernels import grow_gini_tree
from .tree import Tree, normalized


class ForestModel:
    def __init__(self, trees, importance):
        self.trees = list(trees)
        self.importance_ = np.asarray(importance, dtype=float)

    @classmethod
    def fit(cls, X, y, params, rng):
        n, p = X.shape
        X = np.ascontiguousarray(X, dtype=float)
        mf = params["max_features"]
        max_features = max(1, int(math.sqrt(p))) if mf == "sqrt" else min(int(mf), p)
        max_depth = -1 if params["max_depth"] is None else int(params["max_depth"])
        # draw every tree's randomness up front so results do not depend on scheduling
        seeds = rng.integers(1, 2**63 - 1, size=params["n_trees"])
        rows = [rng.integers(0, n, size=n) if params["bootstrap"] else np.arange(n) for _ in seeds]
        trees = []
        imp = np.zeros(p)
        for r, s in zip(rows, seeds):
            out = grow_gini_tree(X, y, r.astype(np.int64), max_features, int(params["min_samples_split"]), max_depth, np.uint64(s))
            trees.append(Tree.from_kernel(*out[:6]))
            imp += normalized(out[6])
        return cls(trees, normalized(imp))

    def predict_proba(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def importance(self):
        return self.importance_, None

    def to_params(self):
        return {"trees": [t.to_params() for t in self.trees], "importance": self.importance_.tolist()}

    @classmethod
    def from_params(cls, d):
        return cls([Tree.from_params(t) for t in d["trees"]], d["importance"])
