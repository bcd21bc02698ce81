"""Feature-space evasion attacks under an add-only L0 budget.

Attacks flip zero-valued binary features to 1, never the reverse, and never
touch continuous features.  The input-specific attack recomputes the input
gradient after every flip; the universal perturbation (UAP) is a single
index set crafted once and applied to every input.  UAP index order records
the crafting rank, most benign-direction first, so evasion can be reported
as a function of a truncated budget.

UAP files are one line of text: ``uap v1: i1,i2,...`` with sorted indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BINARY, FeatureSpaceSpec, FeatureVector, LabeledDataset
from .models.common import as_threshold, input_gradient, predict_scores


@dataclass(frozen=True)
class AttackBudget:
    """Maximum number of added features; only add-only attacks are supported."""

    l0_max: int
    add_only: bool = True

    def __post_init__(self):
        if self.l0_max < 1:
            raise ValueError("l0_max must be at least 1")
        if not self.add_only:
            raise ValueError("only add-only attacks are supported")


@dataclass(frozen=True)
class UapVector:
    """Universal perturbation: indices of binary features to set, in crafting rank order."""

    spec: FeatureSpaceSpec
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError("UAP indices must be unique")
        for i in idx:
            if not 0 <= i < self.spec.n_features:
                raise ValueError(f"UAP index {i} out of range")
            if self.spec.feature_kinds[i] != BINARY:
                raise ValueError(f"UAP index {i} is not a binary feature")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)


def apply_uap(x: FeatureVector, uap: UapVector) -> FeatureVector:
    """OR the UAP indices into a vector; idempotent, add-only."""
    if x.spec != uap.spec:
        raise ValueError("vector and UAP live in different feature spaces")
    values = dict(x.values)
    for i in uap.indices:
        values[i] = 1.0
    return FeatureVector(x.spec, values)


def _binary_zero_candidates(x: FeatureVector) -> list[int]:
    return [
        i for i, k in enumerate(x.spec.feature_kinds)
        if k == BINARY and x.values.get(i, 0.0) == 0.0
    ]


def input_specific_attack(model, x: FeatureVector, budget: AttackBudget, threshold=0.5) -> FeatureVector:
    """Greedy per-input attack: repeatedly flip the zero-valued binary feature
    with the most negative score gradient, recomputing the gradient after every
    flip.  Stops when the input is classified benign, the budget is spent, or
    no remaining candidate has a strictly negative gradient.  An input already
    classified benign is returned unchanged.
    """
    thr = as_threshold(threshold)
    current = x
    if predict_scores(model, [current])[0] < thr.c:
        return current
    for _ in range(budget.l0_max):
        candidates = _binary_zero_candidates(current)
        if not candidates:
            raise ValueError("no zero-valued binary features left to flip")
        grad = input_gradient(model, current)
        cand = np.array(candidates)
        best = cand[int(np.argmin(grad[cand]))]  # argmin takes the lowest index on ties
        if grad[best] >= 0.0:
            break
        values = dict(current.values)
        values[int(best)] = 1.0
        current = FeatureVector(current.spec, values)
        if predict_scores(model, [current])[0] < thr.c:
            break
    return current


def _rank_by_gradient(spec: FeatureSpaceSpec, mean_grad: np.ndarray, l0_max: int) -> tuple[int, ...]:
    binary = spec.binary_indices
    order = binary[np.argsort(mean_grad[binary], kind="stable")]
    return tuple(int(i) for i in order[: min(l0_max, len(order))])


def craft_uap_avg_jacobian(model, malware_set: LabeledDataset, budget: AttackBudget) -> UapVector:
    """UAP from the input gradient averaged over the malware set: a single
    ranking pass picks the l0_max binary features with the most negative mean
    gradient (ties to the lowest index)."""
    if len(malware_set) == 0:
        raise ValueError("malware set is empty")
    if not np.all(malware_set.labels == 1):
        raise ValueError("malware set must contain only label-1 examples")
    X = malware_set.dense_matrix()
    mean_grad = model.score_input_gradient_matrix(X).mean(axis=0)
    return UapVector(malware_set.spec, _rank_by_gradient(malware_set.spec, mean_grad, budget.l0_max))


def craft_uap_linear(model, spec: FeatureSpaceSpec, budget: AttackBudget) -> UapVector:
    """UAP for a linear model: the l0_max binary features with the smallest
    weights, most negative first, ties to the lowest index."""
    if model.weights.shape[0] != spec.n_features:
        raise ValueError("model and spec disagree on n_features")
    return UapVector(spec, _rank_by_gradient(spec, model.weights, budget.l0_max))


def transfer_eval(uap: UapVector, target_model, malware_set: LabeledDataset, threshold=0.5):
    """Evaluate a UAP against a target model's true-positive malware.

    Returns an evaluation report whose per_length_uer lists the evasion rate
    when only the first k ranked indices are applied, k = 1..len(uap).
    """
    from .metrics import EvaluationReport

    thr = as_threshold(threshold)
    if len(malware_set) == 0:
        raise ValueError("empty evaluation set")
    if not np.all(malware_set.labels == 1):
        raise ValueError("malware set must contain only label-1 examples")
    X = malware_set.dense_matrix()
    tp = target_model.score_matrix(X) >= thr.c
    if not tp.any():
        raise ValueError("target model has no true positives on this set")
    Xtp = X[tp].copy()
    n = Xtp.shape[0]
    per_length = []
    n_evasive = 0
    for i in uap.indices:
        Xtp[:, i] = 1.0
        n_evasive = int(np.sum(target_model.score_matrix(Xtp) < thr.c))
        per_length.append(n_evasive / n)
    return EvaluationReport(
        uer=per_length[-1] if per_length else 0.0,
        n_evasive=n_evasive,
        n_total=n,
        n_corrupted=0,
        n_parse_error=0,
        per_length_uer=tuple(per_length),
    )


def save_uap(uap: UapVector, path) -> None:
    """Write the one-line UAP format with sorted indices."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("uap v1: " + ",".join(str(i) for i in sorted(uap.indices)) + "\n")


def load_uap(path, spec: FeatureSpaceSpec) -> UapVector:
    """Read the one-line UAP format; rank order of a loaded UAP is sorted index order."""
    with open(path, "r", encoding="utf-8") as f:
        line = f.readline().strip()
    if not line.startswith("uap v1:"):
        raise ValueError("not a UAP file or unsupported version (expected 'uap v1:')")
    body = line[len("uap v1:"):].strip()
    indices = tuple(int(t) for t in body.split(",")) if body else ()
    return UapVector(spec, indices)
