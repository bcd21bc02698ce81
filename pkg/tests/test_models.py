from __future__ import annotations

import numpy as np
import pytest

from uapkit.data import SyntheticDatasetConfig, synthesize_dataset
from uapkit.models import (
    LinearModel,
    MlpModel,
    NonDifferentiableModelError,
    TrainConfig,
    deep_layer_sizes,
    input_gradient,
    load_model,
    predict_labels,
    predict_scores,
    save_model,
    small_layer_sizes,
    standard_layer_sizes,
    train_gbdt,
    train_linear_svm,
    train_logistic_regression,
    train_mlp,
)

from conftest import binary_spec, dataset_from_dense, lr, mixed_spec, vec

SIGMOID_1 = 0.7310585786300049  # 1 / (1 + e^-1), hand computed


def separable_dataset(n=2000, n_features=20, seed=0):
    planted = max(1, n_features // 4)
    cfg = SyntheticDatasetConfig(n_features=n_features, n_benign=n // 2, n_malware=n // 2,
                                 n_goodware_indicative=planted, n_malware_indicative=planted,
                                 p_on_in_own_class=0.95, p_on_in_other_class=0.01, seed=seed)
    return synthesize_dataset(cfg)


# ---------------------------------------------------------------------------
# scoring and thresholds


def test_zero_lr_scores_half(spec4):
    model = lr([0.0] * 4)
    X = np.array([[0, 0, 0, 0], [1, 1, 1, 1], [1, 0, 1, 0]], dtype=float)
    assert np.allclose(model.score_matrix(X), 0.5)


def test_lr_sigmoid_of_margin():
    # w=[-2,1], b=0 on x={1:1} -> margin 1 -> sigmoid(1)
    model = lr([-2.0, 1.0])
    score = model.score_matrix(np.array([[0.0, 1.0]]))[0]
    assert score == pytest.approx(SIGMOID_1, abs=1e-12)


def test_predict_labels_threshold_cases(spec4):
    model = lr([0.0] * 4)
    assert predict_labels(model, np.zeros((0, 4)), 0.9).tolist() == []
    # score 0.89 under C=0.90 -> benign
    m1 = LinearModel("logistic_regression", np.array([np.log(0.89 / 0.11), 0, 0, 0]), 0.0)
    X = np.array([[1.0, 0, 0, 0]])
    assert predict_scores(m1, X)[0] == pytest.approx(0.89, abs=1e-12)
    assert predict_labels(m1, X, 0.90).tolist() == [0]
    # scores [0.1, 0.95] at C=0.87 -> [0, 1]
    w = np.array([np.log(0.1 / 0.9), np.log(0.95 / 0.05), 0, 0])
    m2 = LinearModel("logistic_regression", w, 0.0)
    X2 = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
    assert predict_labels(m2, X2, 0.87).tolist() == [0, 1]
    with pytest.raises(ValueError):
        predict_labels(model, X, 0.0)  # threshold must lie in (0,1)


# ---------------------------------------------------------------------------
# input gradients


def test_lr_gradient_closed_form():
    # sigma'(0) * w = 0.25 * [1,-1]; cross-checked by finite differences
    model = lr([1.0, -1.0])
    g = input_gradient(model, np.zeros(2))
    assert np.allclose(g, [0.25, -0.25], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_lr_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=10)
    model = lr(w, bias=float(rng.normal()))
    x = (rng.random(10) < 0.5).astype(float)
    g = input_gradient(model, x)
    h = 1e-5
    for i in rng.choice(10, size=4, replace=False):
        e = np.zeros(10)
        e[i] = h
        fd = (model.score_matrix((x + e)[None])[0] - model.score_matrix((x - e)[None])[0]) / (2 * h)
        assert abs(g[i] - fd) <= 1e-4 * max(1.0, abs(fd))


@pytest.mark.parametrize("seed", range(3))
def test_mlp_gradient_matches_finite_differences(seed):
    spec = binary_spec(12)
    ds = separable_dataset(n=80, n_features=12, seed=seed)
    model = train_mlp(ds, TrainConfig(epochs=3, seed=seed), (12, 16, 8, 1))
    rng = np.random.default_rng(seed + 100)
    x = (rng.random(12) < 0.4).astype(float)
    g = input_gradient(model, x)
    h = 1e-5
    for i in range(12):
        e = np.zeros(12)
        e[i] = h
        fd = (model.score_matrix((x + e)[None])[0] - model.score_matrix((x - e)[None])[0]) / (2 * h)
        assert abs(g[i] - fd) <= 1e-4 * max(1.0, abs(fd))


def test_gbdt_has_no_gradient():
    ds = separable_dataset(n=60, n_features=8)
    model = train_gbdt(ds, n_trees=2)
    with pytest.raises(NonDifferentiableModelError):
        input_gradient(model, np.zeros(8))


# ---------------------------------------------------------------------------
# linear training


def test_lr_separable_accuracy():
    ds = separable_dataset()
    model = train_logistic_regression(ds, TrainConfig(epochs=12, seed=0))
    X = ds.dense_matrix()
    acc = np.mean((model.score_matrix(X) >= 0.5).astype(int) == ds.labels)
    assert acc >= 0.99


def test_svm_separable_accuracy_and_1d_sign():
    ds = separable_dataset()
    model = train_linear_svm(ds, TrainConfig(epochs=12, seed=0))
    X = ds.dense_matrix()
    acc = np.mean((model.score_matrix(X) >= 0.5).astype(int) == ds.labels)
    assert acc >= 0.99
    # 1-D separable set: malware at x=1, benign at x=0 -> weight > 0
    spec = binary_spec(1)
    ds1 = dataset_from_dense(spec, [[0.0]] * 30 + [[1.0]] * 30, [0] * 30 + [1] * 30)
    m1 = train_linear_svm(ds1, TrainConfig(epochs=40, seed=1))
    assert m1.weights[0] > 0


def test_svm_weight_norm_shrinks_with_c():
    ds = separable_dataset(n=400)
    norms = []
    for c in (1.0, 0.1, 0.01):
        m = train_linear_svm(ds, TrainConfig(epochs=20, seed=3, hinge_c=c))
        norms.append(np.linalg.norm(m.weights))
    assert norms[0] > norms[1] > norms[2]


def test_svm_duplicate_rows_keep_decision_direction():
    ds = separable_dataset(n=300, seed=4)
    doubled = type(ds)(ds.spec, ds.examples + ds.examples, np.concatenate([ds.labels] * 2),
                       list(ds.ids) + [i + "b" for i in ds.ids])
    m1 = train_linear_svm(ds, TrainConfig(epochs=15, seed=5))
    m2 = train_linear_svm(doubled, TrainConfig(epochs=15, seed=5))
    X = ds.dense_matrix()
    assert np.array_equal(m1.score_matrix(X) >= 0.5, m2.score_matrix(X) >= 0.5)


def test_training_is_deterministic():
    ds = separable_dataset(n=200)
    cfg = TrainConfig(epochs=4, seed=9)
    a = train_logistic_regression(ds, cfg)
    b = train_logistic_regression(ds, cfg)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


def test_sgd_optimizer_supported():
    ds = separable_dataset(n=200)
    m = train_logistic_regression(ds, TrainConfig(optimizer="sgd", epochs=6, seed=0,
                                                  learning_rate=0.05))
    X = ds.dense_matrix()
    acc = np.mean((m.score_matrix(X) >= 0.5).astype(int) == ds.labels)
    assert acc >= 0.95
    with pytest.raises(ValueError):
        TrainConfig(optimizer="lbfgs")


# ---------------------------------------------------------------------------
# MLP


def test_mlp_xor():
    spec = binary_spec(2)
    ds = dataset_from_dense(spec, [[0, 0], [0, 1], [1, 0], [1, 1]], [0, 1, 1, 0])
    model = train_mlp(ds, TrainConfig(epochs=2000, batch_size=4, seed=0), (2, 8, 1))
    X = ds.dense_matrix()
    preds = (model.score_matrix(X) >= 0.5).astype(int)
    assert preds.tolist() == [0, 1, 1, 0]


def test_mlp_dropout_only_at_training():
    ds = separable_dataset(n=120, n_features=10)
    model = train_mlp(ds, TrainConfig(epochs=3, seed=0), (10, 16, 1), dropout_rate=0.5)
    X = ds.dense_matrix()
    assert np.array_equal(model.score_matrix(X), model.score_matrix(X))


def test_layer_size_presets():
    assert standard_layer_sizes(100) == (100, 1024, 512, 1)
    assert small_layer_sizes(100) == (100, 256, 128, 1)
    assert deep_layer_sizes(100) == (100, 512, 256, 128, 64, 1)


def test_mlp_rejects_bad_architecture():
    ds = separable_dataset(n=40, n_features=6)
    with pytest.raises(ValueError):
        train_mlp(ds, TrainConfig(epochs=1), (6, 8, 2))  # output width must be 1
    with pytest.raises(ValueError):
        train_mlp(ds, TrainConfig(epochs=1), (5, 8, 1))  # input width mismatch


# ---------------------------------------------------------------------------
# GBDT


def test_gbdt_1d_threshold_split():
    spec = mixed_spec(0, 1)
    xs = [[v / 20] for v in range(20)]
    ys = [0] * 10 + [1] * 10
    ds = dataset_from_dense(spec, xs, ys)
    model = train_gbdt(ds, n_trees=1, max_leaves=2)
    tree = model.trees[0]
    th = tree.threshold[0]
    assert 9 / 20 <= th <= 10 / 20  # split falls in the separating gap
    X = ds.dense_matrix()
    acc = np.mean((model.score_matrix(X) >= 0.5).astype(int) == np.array(ys))
    assert acc == 1.0


def test_gbdt_leaf_budget():
    ds = separable_dataset(n=300, n_features=15, seed=2)
    model = train_gbdt(ds, n_trees=10, max_leaves=5)
    for tree in model.trees:
        assert np.sum(tree.feature == -1) <= 5


def test_gbdt_rejects_single_class():
    spec = binary_spec(3)
    ds = dataset_from_dense(spec, np.zeros((5, 3)), [1] * 5)
    with pytest.raises(ValueError):
        train_gbdt(ds, n_trees=1)


def test_gbdt_deterministic():
    ds = separable_dataset(n=200, n_features=10, seed=6)
    a = train_gbdt(ds, n_trees=5)
    b = train_gbdt(ds, n_trees=5)
    X = ds.dense_matrix()
    assert np.array_equal(a.score_matrix(X), b.score_matrix(X))


# ---------------------------------------------------------------------------
# model file round trips


@pytest.mark.parametrize("family", ["lr", "svm", "mlp", "gbdt"])
def test_model_file_round_trip_exact(tmp_path, family):
    ds = separable_dataset(n=150, n_features=12, seed=8)
    if family == "lr":
        model = train_logistic_regression(ds, TrainConfig(epochs=3, seed=1))
    elif family == "svm":
        model = train_linear_svm(ds, TrainConfig(epochs=3, seed=1))
    elif family == "mlp":
        model = train_mlp(ds, TrainConfig(epochs=2, seed=1), (12, 8, 1))
    else:
        model = train_gbdt(ds, n_trees=4)
    path = tmp_path / "m.model"
    save_model(model, path)
    loaded = load_model(path)
    X = ds.dense_matrix()
    assert np.array_equal(model.score_matrix(X), loaded.score_matrix(X))
    assert loaded.kind == model.kind


def test_model_file_rejects_garbage(tmp_path):
    p = tmp_path / "bad.model"
    p.write_text("not a model\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_model(p)


def test_loss_trace_recorded():
    ds = separable_dataset(n=200, n_features=10)
    m = train_logistic_regression(ds, TrainConfig(epochs=5, seed=0))
    assert len(m.loss_trace) == 5
    assert m.loss_trace[-1] < m.loss_trace[0]
