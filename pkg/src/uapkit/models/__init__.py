"""Model families: logistic regression, linear SVM, MLP, and boosted trees."""

from .common import (
    NonDifferentiableModelError,
    PredictionThreshold,
    TrainConfig,
    as_threshold,
    input_gradient,
    predict_labels,
    predict_scores,
    sigmoid,
)
from .gbdt import TreeEnsembleModel, train_gbdt
from .io import load_model, save_model
from .linear import LinearModel, train_linear_svm, train_logistic_regression
from .mlp import (
    MlpModel,
    deep_layer_sizes,
    small_layer_sizes,
    standard_layer_sizes,
    train_mlp,
)

__all__ = [
    "NonDifferentiableModelError",
    "PredictionThreshold",
    "TrainConfig",
    "as_threshold",
    "input_gradient",
    "predict_labels",
    "predict_scores",
    "sigmoid",
    "TreeEnsembleModel",
    "train_gbdt",
    "load_model",
    "save_model",
    "LinearModel",
    "train_linear_svm",
    "train_logistic_regression",
    "MlpModel",
    "deep_layer_sizes",
    "small_layer_sizes",
    "standard_layer_sizes",
    "train_mlp",
]
