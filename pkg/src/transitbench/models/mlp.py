"""Fully connected ReLU network trained with mini-batch Adam on squared error.

Inputs and target are standardized with fit-time statistics; predictions are
mapped back to the target scale.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DataError, NumericError
from .base import FittedModel, as_array, feature_names_of, register_predictor


def init_layers(sizes, rng) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        layers.append((W, np.zeros(fan_out)))
    return layers


def forward(layers, X):
    """Return the output and the list of hidden pre-activations."""
    h = X
    pre = []
    for W, b in layers[:-1]:
        z = h @ W + b
        pre.append((h, z))
        h = np.maximum(z, 0.0)
    W, b = layers[-1]
    return (h @ W + b).ravel(), pre, h


def loss_and_grad(layers, X, y, w=None):
    """Weighted mean of 0.5*(f(x) - y)^2 and its gradient by backpropagation."""
    out, pre, h_last = forward(layers, X)
    n = len(y)
    w = np.ones(n) if w is None else w
    wn = w / w.sum()
    err = out - y
    loss = 0.5 * np.sum(wn * err**2)
    delta = (wn * err)[:, None]
    grads = [None] * len(layers)
    W_out = layers[-1][0]
    grads[-1] = (h_last.T @ delta, delta.sum(axis=0))
    back = delta @ W_out.T
    for i in range(len(layers) - 2, -1, -1):
        h_in, z = pre[i]
        back = back * (z > 0)
        grads[i] = (h_in.T @ back, back.sum(axis=0))
        if i > 0:
            back = back @ layers[i][0].T
    return loss, grads


def fit_mlp(X, y, hidden_sizes=(32,), epochs: int = 200, step_size: float = 1e-3, batch: int = 64,
            seed: int = 0, sample_weight=None) -> FittedModel:
    A = as_array(X)
    y = np.asarray(y, dtype=float)
    if len(y) != len(A):
        raise DataError("X and y lengths differ")
    hidden_sizes = [int(h) for h in (hidden_sizes or [])]
    if not hidden_sizes or min(hidden_sizes) < 1:
        raise ConfigError("mlp needs at least one hidden layer of size >= 1")
    if epochs < 1 or batch < 1 or step_size <= 0:
        raise ConfigError("epochs, batch and step_size must be positive")
    n, p = A.shape
    rng = np.random.default_rng(seed)
    x_mean = A.mean(axis=0)
    x_scale = A.std(axis=0)
    x_scale[x_scale == 0] = 1.0
    y_mean, y_scale = y.mean(), y.std() or 1.0
    Z = (A - x_mean) / x_scale
    t = (y - y_mean) / y_scale
    if not (np.all(np.isfinite(x_scale)) and np.isfinite(y_scale) and np.all(np.isfinite(Z))):
        raise NumericError("mlp inputs overflow when standardized; rescale the offending columns")
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)

    layers = init_layers([p, *hidden_sizes, 1], rng)
    m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
    v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    history = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start:start + batch]
            loss, grads = loss_and_grad(layers, Z[idx], t[idx], w[idx])
            if not np.isfinite(loss):
                raise NumericError(
                    f"mlp loss became non-finite at epoch {epoch}, step {step}; "
                    f"try a smaller step_size (now {step_size})"
                )
            step += 1
            new_layers = []
            for i, ((W, b), (gW, gb)) in enumerate(zip(layers, grads)):
                mW, mb = m[i]
                vW, vb = v[i]
                mW = beta1 * mW + (1 - beta1) * gW
                mb = beta1 * mb + (1 - beta1) * gb
                vW = beta2 * vW + (1 - beta2) * gW**2
                vb = beta2 * vb + (1 - beta2) * gb**2
                m[i], v[i] = (mW, mb), (vW, vb)
                c1, c2 = 1 - beta1**step, 1 - beta2**step
                W = W - step_size * (mW / c1) / (np.sqrt(vW / c2) + eps)
                b = b - step_size * (mb / c1) / (np.sqrt(vb / c2) + eps)
                new_layers.append((W, b))
            layers = new_layers
        full, _ = loss_and_grad(layers, Z, t, w)
        history.append(float(full))
        if not np.isfinite(full):
            raise NumericError(f"mlp loss became non-finite after epoch {epoch}")

    return FittedModel(
        "mlp",
        {
            "weights": [W for W, _ in layers], "biases": [b for _, b in layers],
            "x_mean": x_mean, "x_scale": x_scale, "y_mean": float(y_mean), "y_scale": float(y_scale),
        },
        feature_names_of(X, p),
        {"converged": True, "iterations": epochs, "final_loss": history[-1] * 2 * y_scale**2,
         "loss_history": history},
        seed,
    )


@register_predictor("mlp")
def _predict_mlp(model, X):
    p = model.params
    layers = [(np.asarray(W), np.asarray(b)) for W, b in zip(p["weights"], p["biases"])]
    Z = (X - np.asarray(p["x_mean"])) / np.asarray(p["x_scale"])
    out, _, _ = forward(layers, Z)
    return p["y_mean"] + p["y_scale"] * out
