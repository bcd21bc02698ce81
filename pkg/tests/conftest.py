from __future__ import annotations

import numpy as np
import pytest

from uapkit.data import BINARY, CONTINUOUS, FeatureSpaceSpec, FeatureVector, LabeledDataset
from uapkit.models import LinearModel


def binary_spec(n: int, group: str = "g") -> FeatureSpaceSpec:
    return FeatureSpaceSpec(n, (BINARY,) * n, (group,) * n)


def mixed_spec(n_binary: int, n_continuous: int) -> FeatureSpaceSpec:
    kinds = (BINARY,) * n_binary + (CONTINUOUS,) * n_continuous
    groups = ("bin",) * n_binary + ("cont",) * n_continuous
    return FeatureSpaceSpec(n_binary + n_continuous, kinds, groups)


def lr(weights, bias: float = 0.0) -> LinearModel:
    return LinearModel("logistic_regression", np.asarray(weights, dtype=np.float64), bias)


def vec(spec: FeatureSpaceSpec, values: dict) -> FeatureVector:
    return FeatureVector(spec, {int(k): float(v) for k, v in values.items()})


def malware_set(spec: FeatureSpaceSpec, rows) -> LabeledDataset:
    examples = [vec(spec, r) for r in rows]
    return LabeledDataset(spec, examples, np.ones(len(rows), dtype=int),
                          [f"m{i}" for i in range(len(rows))])


def dataset_from_dense(spec: FeatureSpaceSpec, X, y) -> LabeledDataset:
    X = np.asarray(X, dtype=np.float64)
    examples = [FeatureVector.from_dense(spec, row) for row in X]
    return LabeledDataset(spec, examples, np.asarray(y, dtype=int),
                          [f"e{i}" for i in range(len(examples))])


def random_binary_malware(spec: FeatureSpaceSpec, n: int, p: float, seed: int) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    X = (rng.random((n, spec.n_features)) < p).astype(np.float64)
    return dataset_from_dense(spec, X, np.ones(n, dtype=int))


@pytest.fixture
def spec4() -> FeatureSpaceSpec:
    return binary_spec(4)
