"""Feed-forward ReLU network with a sigmoid output, trained on L2-penalized log-loss."""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .base import ConvergenceError


def layer_shapes(n_in: int, hidden) -> list[tuple[int, int]]:
    sizes = [n_in, *hidden, 1]
    return [(sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]


def n_params(shapes) -> int:
    return sum(a * b + b for a, b in shapes)


def unpack(theta, shapes):
    """Views ``[(W, b), ...]`` into the flat parameter vector."""
    out = []
    pos = 0
    for a, b in shapes:
        W = theta[pos : pos + a * b].reshape(a, b)
        pos += a * b
        out.append((W, theta[pos : pos + b]))
        pos += b
    return out


def init_params(shapes, rng) -> np.ndarray:
    """Glorot-uniform weights and biases (factor 6 for ReLU layers, 2 for the sigmoid output)."""
    theta = np.empty(n_params(shapes))
    for k, (W, b) in enumerate(unpack(theta, shapes)):
        fan_in, fan_out = W.shape
        factor = 2.0 if k == len(shapes) - 1 else 6.0
        bound = np.sqrt(factor / (fan_in + fan_out))
        W[...] = rng.uniform(-bound, bound, size=W.shape)
        b[...] = rng.uniform(-bound, bound, size=b.shape)
    return theta


def mlp_loss_grad(theta, X, y, shapes, alpha):
    """Mean log-loss plus ``alpha / (2 n) * sum(W^2)`` and its gradient."""
    layers = unpack(theta, shapes)
    n = X.shape[0]
    acts = [X]
    h = X
    for W, b in layers[:-1]:
        h = np.maximum(h @ W + b, 0.0)
        acts.append(h)
    W_out, b_out = layers[-1]
    z = (h @ W_out + b_out).ravel()
    loss = np.mean(np.logaddexp(0.0, z) - y * z)
    loss += 0.5 * alpha / n * sum(float(np.sum(W * W)) for W, _ in layers)
    grad = np.empty_like(theta)
    glayers = unpack(grad, shapes)
    delta = ((expit(z) - y) / n)[:, None]
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        gW, gb = glayers[k]
        gW[...] = acts[k].T @ delta + alpha / n * W
        gb[...] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ W.T) * (acts[k] > 0)
    return loss, grad


def forward(theta, X, shapes):
    layers = unpack(theta, shapes)
    h = X
    for W, b in layers[:-1]:
        h = np.maximum(h @ W + b, 0.0)
    W_out, b_out = layers[-1]
    return (h @ W_out + b_out).ravel()


class MlpModel:
    def __init__(self, theta, shapes, n_epochs=0, final_loss=float("nan")):
        self.theta = np.asarray(theta, dtype=float)
        self.shapes = [tuple(s) for s in shapes]
        self.n_epochs = n_epochs
        self.final_loss = final_loss

    @classmethod
    def fit(cls, X, y, params, rng):
        shapes = layer_shapes(X.shape[1], params["hidden"])
        theta = init_params(shapes, rng)
        y = y.astype(float)
        alpha = params["alpha"]
        if params["solver"] == "lbfgs":
            res = minimize(
                mlp_loss_grad, theta, args=(X, y, shapes, alpha), jac=True, method="L-BFGS-B",
                options={"maxiter": params["epochs"], "maxfun": 15000, "gtol": params["tol"] * 1e-1},
            )
            if not np.isfinite(res.fun):
                raise ConvergenceError("MLP quasi-Newton produced a non-finite loss", {"iterations": int(res.nit)})
            return cls(res.x, shapes, int(res.nit), float(res.fun))
        return cls._fit_adam(X, y, params, rng, shapes, theta)

    @classmethod
    def _fit_adam(cls, X, y, params, rng, shapes, theta):
        lr, alpha, bs = params["lr"], params["alpha"], params["batch_size"]
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        m = np.zeros_like(theta)
        v = np.zeros_like(theta)
        n = X.shape[0]
        bs = min(bs, n)
        t = 0
        best = np.inf
        no_improve = 0
        epoch_loss = np.nan
        for epoch in range(params["epochs"]):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, bs):
                idx = order[start : start + bs]
                loss, g = mlp_loss_grad(theta, X[idx], y[idx], shapes, alpha)
                total += loss * idx.size
                t += 1
                m = beta1 * m + (1 - beta1) * g
                v = beta2 * v + (1 - beta2) * g * g
                step = lr * np.sqrt(1 - beta2**t) / (1 - beta1**t)
                theta = theta - step * m / (np.sqrt(v) + eps)
            epoch_loss = total / n
            if not np.isfinite(epoch_loss):
                raise ConvergenceError(f"MLP loss became non-finite in epoch {epoch + 1}", {"epoch": epoch + 1})
            # stop once the epoch loss has not improved by tol for n_iter_no_change epochs
            if epoch_loss > best - params["tol"]:
                no_improve += 1
            else:
                no_improve = 0
            best = min(best, epoch_loss)
            if no_improve >= params["n_iter_no_change"]:
                return cls(theta, shapes, epoch + 1, epoch_loss)
        return cls(theta, shapes, params["epochs"], epoch_loss)

    def predict_proba(self, X):
        return expit(forward(self.theta, X, self.shapes))

    def to_params(self):
        return {"theta": self.theta.tolist(), "shapes": [list(s) for s in self.shapes], "n_epochs": self.n_epochs, "final_loss": self.final_loss}

    @classmethod
    def from_params(cls, d):
        return cls(d["theta"], d["shapes"], d.get("n_epochs", 0), d.get("final_loss", float("nan")))
