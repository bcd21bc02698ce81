"""Shared training configuration, scoring, thresholding and input gradients.

All model families expose the same scoring surface: a malware score in
[0, 1] per example, a hard label via score >= threshold (inclusive), and,
for differentiable families, the gradient of the malware score with respect
to the input.  Trainers are bitwise deterministic given their seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import FeatureVector


class NonDifferentiableModelError(ValueError):
    """Raised when input gradients are requested from a non-differentiable model."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer family and schedule shared by the gradient-based trainers."""

    optimizer: str = "adam"
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 256
    seed: int = 0
    hinge_c: float = 1.0

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.hinge_c <= 0:
            raise ValueError("hinge_c must be positive")


@dataclass(frozen=True)
class PredictionThreshold:
    """Malware decision threshold C: label 1 iff score >= C."""

    c: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise ValueError("threshold must lie strictly inside (0, 1)")


def as_threshold(threshold) -> PredictionThreshold:
    if isinstance(threshold, PredictionThreshold):
        return threshold
    return PredictionThreshold(float(threshold))


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class _Adam:
    """Adam optimizer over a list of parameter arrays (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


class _Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def make_optimizer(cfg: TrainConfig, params):
    if cfg.optimizer == "adam":
        return _Adam(params, cfg.learning_rate)
    return _Sgd(params, cfg.learning_rate)


def _stack(xs) -> np.ndarray:
    if isinstance(xs, np.ndarray):
        return np.asarray(xs, dtype=np.float64)
    return np.stack([x.to_dense() for x in xs], axis=0)


def predict_scores(model, xs) -> np.ndarray:
    """Malware scores in [0, 1] for feature vectors or a dense matrix, input order preserved."""
    if len(xs) == 0:
        return np.zeros(0, dtype=np.float64)
    return model.score_matrix(_stack(xs))


def predict_labels(model, xs, threshold=0.5) -> np.ndarray:
    """Hard labels: 1 iff score >= threshold (boundary counts as malware)."""
    thr = as_threshold(threshold)
    return (predict_scores(model, xs) >= thr.c).astype(int)


def input_gradient(model, x) -> np.ndarray:
    """Gradient of the malware score w.r.t. the input (a FeatureVector or a
    dense 1-D array), inference mode."""
    grad_matrix = getattr(model, "score_input_gradient_matrix", None)
    if grad_matrix is None:
        raise NonDifferentiableModelError(
            f"model kind {getattr(model, 'kind', type(model).__name__)!r} is non-differentiable"
        )
    dense = x.to_dense() if hasattr(x, "to_dense") else np.asarray(x, dtype=np.float64)
    return grad_matrix(dense[None, :])[0]
