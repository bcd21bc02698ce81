"""Fully connected feed-forward network with LeakyReLU hidden units.

Architecture: affine -> LeakyReLU(0.1) per hidden layer, affine -> sigmoid
output.  Inverted dropout on hidden activations at train time only.
Trained with minibatch Adam or SGD on binary cross-entropy; bitwise
deterministic given the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import LabeledDataset
from .common import TrainConfig, make_optimizer, sigmoid

LEAKY_SLOPE = 0.1


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: list  # weights[l]: (layer_sizes[l], layer_sizes[l+1])
    biases: list
    leaky_slope: float = LEAKY_SLOPE
    dropout_rate: float = 0.2
    kind: str = "mlp"
    loss_trace: tuple = field(default=(), compare=False, repr=False)

    @property
    def n_features(self) -> int:
        return int(self.layer_sizes[0])

    def _forward(self, X: np.ndarray):
        """Returns (pre-activations, activations); inference mode, no dropout."""
        acts = [X]
        pres = []
        h = X
        last = len(self.weights) - 1
        for l, (W, c) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + c
            pres.append(z)
            if l < last:
                h = np.where(z > 0, z, self.leaky_slope * z)
            else:
                h = sigmoid(z)
            acts.append(h)
        return pres, acts

    def score_matrix(self, X: np.ndarray) -> np.ndarray:
        _, acts = self._forward(X)
        return acts[-1][:, 0]

    def score_input_gradient_matrix(self, X: np.ndarray) -> np.ndarray:
        """d(score)/d(input) rows, computed by backpropagation without dropout."""
        pres, _ = self._forward(X)
        s = sigmoid(pres[-1][:, 0])
        delta = (s * (1.0 - s))[:, None]  # d score / d z_last
        for l in range(len(self.weights) - 1, 0, -1):
            delta = delta @ self.weights[l].T
            z = pres[l - 1]
            delta = delta * np.where(z > 0, 1.0, self.leaky_slope)
        return delta @ self.weights[0].T


def _init_params(layer_sizes, rng):
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return weights, biases


def _train_mlp(train: LabeledDataset, cfg: TrainConfig, layer_sizes, dropout_rate, batch_hook=None) -> MlpModel:
    if len(train) == 0:
        raise ValueError("training set is empty")
    layer_sizes = tuple(int(s) for s in layer_sizes)
    if len(layer_sizes) < 2 or any(s <= 0 for s in layer_sizes):
        raise ValueError("layer_sizes must be positive and include input and output sizes")
    if layer_sizes[0] != train.spec.n_features:
        raise ValueError("first layer size must equal n_features")
    if layer_sizes[-1] != 1:
        raise ValueError("output layer size must be 1")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError("dropout_rate must lie in [0, 1)")
    X = train.dense_matrix()
    y = train.labels.astype(np.float64)
    n = len(train)
    rng_init = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    rng_batch = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    rng_drop = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(2,)))
    weights, biases = _init_params(layer_sizes, rng_init)
    params = weights + biases
    opt = make_optimizer(cfg, params)
    keep = 1.0 - dropout_rate
    n_hidden = len(layer_sizes) - 2
    trace = []
    model = MlpModel(layer_sizes, weights, biases, LEAKY_SLOPE, dropout_rate)
    for epoch in range(cfg.epochs):
        perm = rng_batch.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            rows = perm[start : start + cfg.batch_size]
            Xb, yb = X[rows], y[rows]
            if batch_hook is not None:
                Xb = batch_hook(model, Xb, yb, epoch, n_batches)
            m = len(rows)
            # forward, train mode (inverted dropout on hidden activations)
            h = Xb
            pres, acts, masks = [], [Xb], []
            for l in range(len(weights)):
                z = h @ weights[l] + biases[l]
                pres.append(z)
                if l < len(weights) - 1:
                    h = np.where(z > 0, z, LEAKY_SLOPE * z)
                    if dropout_rate > 0.0 and n_hidden > 0:
                        mask = (rng_drop.random(h.shape) < keep) / keep
                        h = h * mask
                        masks.append(mask)
                    else:
                        masks.append(None)
                else:
                    h = sigmoid(z)
                acts.append(h)
            p = np.clip(acts[-1][:, 0], 1e-12, 1.0 - 1e-12)
            loss = float(-np.mean(yb * np.log(p) + (1.0 - yb) * np.log(1.0 - p)))
            if not np.isfinite(loss):
                raise ValueError(f"non-finite loss at epoch {epoch}, aborting mlp training")
            # backward
            delta = (acts[-1] - yb[:, None]) / m  # d loss / d z_last
            gw, gb = [None] * len(weights), [None] * len(weights)
            for l in range(len(weights) - 1, -1, -1):
                gw[l] = acts[l].T @ delta
                gb[l] = delta.sum(axis=0)
                if l > 0:
                    delta = delta @ weights[l].T
                    if masks[l - 1] is not None:
                        delta = delta * masks[l - 1]
                    z = pres[l - 1]
                    delta = delta * np.where(z > 0, 1.0, LEAKY_SLOPE)
            opt.step(params, gw + gb)
            epoch_loss += loss
            n_batches += 1
        trace.append(epoch_loss / n_batches)
    model.loss_trace = tuple(trace)
    return model


def train_mlp(train: LabeledDataset, cfg: TrainConfig, layer_sizes, dropout_rate: float = 0.2) -> MlpModel:
    """Train the MLP; layer_sizes lists input, hidden and output sizes, e.g. (500, 1024, 512, 1)."""
    return _train_mlp(train, cfg, layer_sizes, dropout_rate)


def standard_layer_sizes(n_features: int) -> tuple[int, ...]:
    return (n_features, 1024, 512, 1)


def small_layer_sizes(n_features: int) -> tuple[int, ...]:
    return (n_features, 256, 128, 1)


def deep_layer_sizes(n_features: int) -> tuple[int, ...]:
    return (n_features, 512, 256, 128, 64, 1)
