"""Logistic regression and linear SVM trained by minibatch gradient descent.

Both kinds score through the logistic link (the SVM maps its margin through
a logistic with fixed scale 1), so downstream thresholding and gradient
code treat them identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import LabeledDataset
from .common import TrainConfig, make_optimizer, sigmoid


@dataclass
class LinearModel:
    kind: str  # "logistic_regression" | "linear_svm"
    weights: np.ndarray
    bias: float
    loss_trace: tuple = field(default=(), compare=False, repr=False)

    @property
    def n_features(self) -> int:
        return int(self.weights.shape[0])

    def margin_matrix(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias

    def score_matrix(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.margin_matrix(X))

    def score_input_gradient_matrix(self, X: np.ndarray) -> np.ndarray:
        s = self.score_matrix(X)
        return (s * (1.0 - s))[:, None] * self.weights[None, :]


def _train_linear(train: LabeledDataset, cfg: TrainConfig, kind: str, batch_hook=None) -> LinearModel:
    if len(train) == 0:
        raise ValueError("training set is empty")
    X = train.dense_matrix()
    y = train.labels.astype(np.float64)
    s = 2.0 * y - 1.0  # labels in {-1, +1} for loss arithmetic
    n, d = X.shape
    w = np.zeros(d, dtype=np.float64)
    b = np.zeros(1, dtype=np.float64)
    params = [w, b]
    opt = make_optimizer(cfg, params)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    trace = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            rows = perm[start : start + cfg.batch_size]
            Xb, sb = X[rows], s[rows]
            if batch_hook is not None:
                Xb = batch_hook(
                    LinearModel(kind, w, float(b[0])), Xb, y[rows], epoch, n_batches
                )
            z = Xb @ w + b[0]
            m = len(rows)
            if kind == "logistic_regression":
                loss = float(np.mean(np.logaddexp(0.0, -sb * z)))
                coef = -sb * sigmoid(-sb * z) / m
                gw = Xb.T @ coef
                gb = np.array([np.sum(coef)])
            else:  # linear_svm: 0.5*||w||^2/m + C*mean(hinge)
                margin = sb * z
                hinge = np.maximum(0.0, 1.0 - margin)
                loss = float(0.5 * np.dot(w, w) / m + cfg.hinge_c * np.mean(hinge))
                active = hinge > 0.0
                coef = np.where(active, -sb, 0.0) * (cfg.hinge_c / m)
                gw = w / m + Xb.T @ coef
                gb = np.array([np.sum(coef)])
            if not np.isfinite(loss):
                raise ValueError(f"non-finite loss at epoch {epoch}, aborting {kind} training")
            opt.step(params, [gw, gb])
            epoch_loss += loss
            n_batches += 1
        trace.append(epoch_loss / n_batches)
    return LinearModel(kind, w, float(b[0]), tuple(trace))


def train_logistic_regression(train: LabeledDataset, cfg: TrainConfig) -> LinearModel:
    """Fit logistic regression by minimizing mean log loss; deterministic given cfg.seed."""
    return _train_linear(train, cfg, "logistic_regression")


def train_linear_svm(train: LabeledDataset, cfg: TrainConfig) -> LinearModel:
    """Fit a linear SVM (hinge loss, L2 regularization, C=cfg.hinge_c) by subgradient descent."""
    return _train_linear(train, cfg, "linear_svm")
