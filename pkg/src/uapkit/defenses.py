"""Adversarial-training defenses and the perturbation statistics model.

Three defense families:

* feature-space adversarial training: every minibatch replaces (pure) or
  half-replaces (mixed) its malware rows with input-specific gradient-attack
  variants computed against the current partial model;
* problem-space UAP adversarial training: clean training for all but the
  last N epochs, then per minibatch a greedy chain search against the
  partial model, applying the found chain to the malware portion;
* statistics-model GBDT hardening: fit per-feature modification
  probabilities and delta histograms from observed transformation traces,
  sample perturbation twins, and retrain the tree ensemble from scratch.

Mixed mode keeps a 1:1 clean/adversarial balance of malware rows; counters
make the accounting checkable.  Defended models are evaluated with a fresh
adaptive search (adaptive_attack_eval), never with a pre-defense chain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BINARY, CONTINUOUS, FeatureVector, LabeledDataset
from .models.common import TrainConfig, as_threshold
from .models.gbdt import TreeEnsembleModel, train_gbdt
from .models.linear import _train_linear
from .models.mlp import _train_mlp
from .problem_space import (
    TRANSFORMED,
    Toolkit,
    TransformationChain,
    _apply_effect_dense,
    _effect_map,
    _seed_rng,
    greedy_uap_search_uer,
)

PURE = "pure"
MIXED = "mixed"


def _check_mix(mix: str) -> str:
    if mix not in (PURE, MIXED):
        raise ValueError(f"mix must be 'pure' or 'mixed', got {mix!r}")
    return mix


@dataclass(frozen=True)
class FeatureSpaceDefenseConfig:
    l0_budget: int
    mix: str = MIXED

    def __post_init__(self):
        if self.l0_budget < 1:
            raise ValueError("l0_budget must be at least 1")
        _check_mix(self.mix)


@dataclass(frozen=True)
class UapAdvTrainingConfig:
    last_n_epochs: int
    mix: str = MIXED
    max_chain_len: int = 10

    def __post_init__(self):
        if self.last_n_epochs < 0:
            raise ValueError("last_n_epochs must be non-negative")
        if self.max_chain_len < 1:
            raise ValueError("max_chain_len must be at least 1")
        _check_mix(self.mix)


def _batched_input_specific(model, Xm: np.ndarray, binary_zero_ok: np.ndarray,
                            l0_budget: int, c: float) -> np.ndarray:
    """Vectorized greedy flips mirroring the single-input attack: per row,
    flip the zero-valued binary feature with the most negative gradient,
    recomputing gradients after every flip; rows stop when benign or when no
    candidate gradient is negative."""
    X = Xm.copy()
    active = model.score_matrix(X) >= c
    for _ in range(l0_budget):
        if not active.any():
            break
        rows = np.nonzero(active)[0]
        grads = model.score_input_gradient_matrix(X[rows])
        candidates = binary_zero_ok[None, :] & (X[rows] == 0.0)
        grads = np.where(candidates, grads, np.inf)
        best = np.argmin(grads, axis=1)
        best_grad = grads[np.arange(len(rows)), best]
        movable = best_grad < 0.0
        if not movable.any():
            break
        flip_rows = rows[movable]
        X[flip_rows, best[movable]] = 1.0
        active[rows[~movable]] = False
        still = model.score_matrix(X[flip_rows]) >= c
        active[flip_rows] = still
    return X


def adv_train_feature_space(model_family: str, train: LabeledDataset,
                            cfg: FeatureSpaceDefenseConfig, train_cfg: TrainConfig,
                            layer_sizes=None, dropout_rate: float = 0.2,
                            threshold=0.5, stats_out: dict | None = None):
    """Adversarial training with per-minibatch input-specific attacks.

    Differentiable families only (logistic_regression, linear_svm, mlp).  In
    pure mode every malware row of every batch is replaced by its attacked
    variant; in mixed mode exactly half (floor for odd counts), preserving a
    1:1 clean/adversarial balance.  Attacks always target the current
    partial model.  Deterministic given train_cfg.seed.
    """
    thr = as_threshold(threshold)
    binary_zero_ok = np.array([k == BINARY for k in train.spec.feature_kinds])
    counters = {"batches": 0, "malware_rows": 0, "adversarial_rows": 0, "clean_malware_rows": 0}

    def hook(model, Xb, yb, epoch, batch_idx):
        mal = np.nonzero(yb == 1)[0]
        counters["batches"] += 1
        counters["malware_rows"] += len(mal)
        if len(mal) == 0:
            return Xb
        if cfg.mix == PURE:
            chosen = mal
        else:
            r = _seed_rng(train_cfg.seed, 3, epoch, batch_idx)
            chosen = np.sort(r.permutation(mal)[: len(mal) // 2])
        counters["adversarial_rows"] += len(chosen)
        counters["clean_malware_rows"] += len(mal) - len(chosen)
        if len(chosen) == 0:
            return Xb
        Xb = Xb.copy()
        Xb[chosen] = _batched_input_specific(model, Xb[chosen], binary_zero_ok, cfg.l0_budget, thr.c)
        return Xb

    if model_family in ("logistic_regression", "linear_svm"):
        model = _train_linear(train, train_cfg, model_family, batch_hook=hook)
    elif model_family == "mlp":
        if layer_sizes is None:
            raise ValueError("mlp family needs layer_sizes")
        model = _train_mlp(train, train_cfg, layer_sizes, dropout_rate, batch_hook=hook)
    else:
        raise ValueError(f"model family {model_family!r} does not support gradient attacks")
    if stats_out is not None:
        stats_out.update(counters)
    return model


def adv_train_uap_problem_space(train: LabeledDataset, toolkit: Toolkit,
                                cfg: UapAdvTrainingConfig, train_cfg: TrainConfig,
                                layer_sizes=None, dropout_rate: float = 0.2,
                                model_family: str = "mlp", threshold=0.5,
                                stats_out: dict | None = None):
    """Problem-space UAP adversarial training.

    Trains normally for epochs - N epochs, then in each of the last N epochs
    runs the greedy UER chain search per minibatch against the current
    partial model (over the batch's true-positive malware) and applies the
    found chain to the malware portion (half in mixed mode, all in pure).
    With last_n_epochs=0 this is bitwise identical to undefended training
    under the same seed: defense streams are derived separately and the
    hook never runs.
    """
    if cfg.last_n_epochs >= train_cfg.epochs:
        raise ValueError("last_n_epochs must be smaller than the epoch count")
    thr = as_threshold(threshold)
    effects = _effect_map(toolkit)
    first_defended = train_cfg.epochs - cfg.last_n_epochs
    counters = {"defended_batches": 0, "malware_rows": 0, "adversarial_rows": 0,
                "clean_malware_rows": 0, "chains_found": 0, "corrupted_rows": 0}

    def hook(model, Xb, yb, epoch, batch_idx):
        if epoch < first_defended:
            return Xb
        mal = np.nonzero(yb == 1)[0]
        counters["defended_batches"] += 1
        counters["malware_rows"] += len(mal)
        if len(mal) == 0:
            return Xb
        tp = mal[model.score_matrix(Xb[mal]) >= thr.c]
        if len(tp) == 0:
            counters["clean_malware_rows"] += len(mal)
            return Xb
        batch_mal = LabeledDataset(
            train.spec,
            [FeatureVector.from_dense(train.spec, Xb[i]) for i in tp],
            np.ones(len(tp), dtype=int),
            [f"r{i}" for i in tp],
        )
        search_seed = int(_seed_rng(train_cfg.seed, 4, epoch, batch_idx).integers(2**63 - 1))
        chain, _ = greedy_uap_search_uer(model, toolkit, batch_mal, thr,
                                         max_len=cfg.max_chain_len, rng=search_seed)
        if len(chain) == 0:
            counters["clean_malware_rows"] += len(mal)
            return Xb
        counters["chains_found"] += 1
        if cfg.mix == PURE:
            chosen = mal
        else:
            r = _seed_rng(train_cfg.seed, 5, epoch, batch_idx)
            chosen = np.sort(r.permutation(mal)[: len(mal) // 2])
        counters["adversarial_rows"] += len(chosen)
        counters["clean_malware_rows"] += len(mal) - len(chosen)
        if len(chosen) == 0:
            return Xb
        Xb = Xb.copy()
        for k, i in enumerate(chosen):
            r = _seed_rng(train_cfg.seed, 6, epoch, batch_idx, k)
            xi = Xb[i].copy()
            status = TRANSFORMED
            for tid in chain.ids:
                status = _apply_effect_dense(xi, effects[tid], r)
                if status != TRANSFORMED:
                    break
            if status == TRANSFORMED:
                Xb[i] = xi
            else:
                counters["corrupted_rows"] += 1  # corrupted variants fall back to the clean row
        return Xb

    if model_family in ("logistic_regression", "linear_svm"):
        model = _train_linear(train, train_cfg, model_family, batch_hook=hook)
    elif model_family == "mlp":
        if layer_sizes is None:
            raise ValueError("mlp family needs layer_sizes")
        model = _train_mlp(train, train_cfg, layer_sizes, dropout_rate, batch_hook=hook)
    else:
        raise ValueError(f"model family {model_family!r} is not trainable per minibatch")
    if stats_out is not None:
        stats_out.update(counters)
    return model


# ---------------------------------------------------------------------------
# perturbation statistics model


@dataclass(frozen=True)
class FeatureStat:
    """Per-feature modification probability and delta law."""

    feature: int
    probability: float
    kind: str  # "set_to_one" for binary, "histogram" for continuous
    bin_edges: tuple = ()
    bin_probs: tuple = ()


@dataclass(frozen=True)
class PerturbationStatModel:
    """Independent per-feature perturbation statistics fitted from traces."""

    n_features: int
    stats: tuple  # FeatureStat for every feature with probability > 0, ascending

    def probability(self, i: int) -> float:
        for s in self.stats:
            if s.feature == i:
                return s.probability
        return 0.0


N_DELTA_BINS = 16


def fit_perturbation_stat_model(clean, outcomes) -> PerturbationStatModel:
    """Fit modification frequencies and delta histograms from aligned
    (clean vector, application outcome) pairs; corrupted and parse-error
    outcomes are skipped.  Continuous deltas get an equal-width histogram
    with N_DELTA_BINS bins over the observed range."""
    if len(clean) != len(outcomes):
        raise ValueError("clean vectors and outcomes must align")
    pairs = [(x, o.vector) for x, o in zip(clean, outcomes) if o.is_transformed]
    if not pairs:
        raise ValueError("no surviving outcomes to fit on")
    spec = pairs[0][0].spec
    n = len(pairs)
    counts = np.zeros(spec.n_features, dtype=np.int64)
    deltas: dict[int, list] = {}
    for x, xt in pairs:
        for i in x.values.keys() | xt.values.keys():
            a, b = x.values.get(i, 0.0), xt.values.get(i, 0.0)
            if a != b:
                counts[i] += 1
                if spec.feature_kinds[i] == CONTINUOUS:
                    deltas.setdefault(i, []).append(b - a)
    stats = []
    for i in np.nonzero(counts)[0]:
        p = counts[i] / n
        if spec.feature_kinds[i] == BINARY:
            stats.append(FeatureStat(int(i), float(p), "set_to_one"))
        else:
            d = np.array(deltas[int(i)], dtype=np.float64)
            lo, hi = float(d.min()), float(d.max())
            if lo == hi:
                edges = np.array([lo, hi])
                probs = np.array([1.0])
            else:
                edges = np.linspace(lo, hi, N_DELTA_BINS + 1)
                hist, _ = np.histogram(d, bins=edges)
                probs = hist / hist.sum()
            stats.append(FeatureStat(int(i), float(p), "histogram",
                                     tuple(edges.tolist()), tuple(probs.tolist())))
    return PerturbationStatModel(spec.n_features, tuple(stats))


def sample_perturbation(stat: PerturbationStatModel, x: FeatureVector, rng) -> FeatureVector:
    """Draw one perturbed twin: each recorded feature flips independently
    with its probability; binary features are set to 1 (add-only), continuous
    features add a delta drawn from the fitted histogram."""
    if stat.n_features != x.spec.n_features:
        raise ValueError("stat model and vector disagree on n_features")
    values = dict(x.values)
    for s in stat.stats:
        if rng.random() < s.probability:
            if s.kind == "set_to_one":
                values[s.feature] = 1.0
            else:
                edges = s.bin_edges
                if len(edges) == 2 and edges[0] == edges[1]:
                    delta = edges[0]
                else:
                    b = rng.choice(len(s.bin_probs), p=s.bin_probs)
                    delta = rng.uniform(edges[b], edges[b + 1])
                values[s.feature] = values.get(s.feature, 0.0) + delta
    return FeatureVector(x.spec, values)


STAT_MAGIC = "uapkit-statmodel v1"


def save_stat_model(stat: PerturbationStatModel, path) -> None:
    """Write a fitted perturbation statistics model as text.

    Format: a magic line, n_features, then one block per recorded feature:
    a header line `[feature I kind=K p=HEX]` followed, for histogram kinds,
    by an `edges:` line and a `probs:` line of space-separated float hex
    values.  Floats use float.hex() so a load reproduces them exactly.
    """
    lines = [STAT_MAGIC, f"n_features={stat.n_features}"]
    for s in stat.stats:
        lines.append(f"[feature {s.feature} kind={s.kind} p={float(s.probability).hex()}]")
        if s.kind == "histogram":
            lines.append("edges: " + " ".join(float(v).hex() for v in s.bin_edges))
            lines.append("probs: " + " ".join(float(v).hex() for v in s.bin_probs))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_stat_model(path) -> PerturbationStatModel:
    """Load a perturbation statistics model written by save_stat_model."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or lines[0] != STAT_MAGIC:
        raise ValueError(f"{path}: not a {STAT_MAGIC} file")
    if len(lines) < 2 or not lines[1].startswith("n_features="):
        raise ValueError(f"{path}: missing n_features line")
    n_features = int(lines[1].split("=", 1)[1])
    stats = []
    k = 2
    while k < len(lines):
        line = lines[k]
        if not line:
            k += 1
            continue
        if not (line.startswith("[feature ") and line.endswith("]")):
            raise ValueError(f"{path} line {k + 1}: expected a [feature ...] header")
        fields = line[1:-1].split()
        feature = int(fields[1])
        kv = dict(f.split("=", 1) for f in fields[2:])
        kind, prob = kv["kind"], float.fromhex(kv["p"])
        k += 1
        if kind == "histogram":
            if k + 1 >= len(lines) or not lines[k].startswith("edges: ") \
                    or not lines[k + 1].startswith("probs: "):
                raise ValueError(f"{path} line {k + 1}: histogram block needs edges and probs")
            edges = tuple(float.fromhex(t) for t in lines[k].split(":", 1)[1].split())
            probs = tuple(float.fromhex(t) for t in lines[k + 1].split(":", 1)[1].split())
            if len(edges) != len(probs) + 1:
                raise ValueError(f"{path} line {k + 1}: need len(edges) == len(probs) + 1")
            stats.append(FeatureStat(feature, prob, kind, edges, probs))
            k += 2
        elif kind == "set_to_one":
            stats.append(FeatureStat(feature, prob, kind))
        else:
            raise ValueError(f"{path} line {k}: unknown kind {kind!r}")
    return PerturbationStatModel(n_features, tuple(stats))


def adv_train_gbdt_with_stat_model(train: LabeledDataset, stat: PerturbationStatModel,
                                   mix: str = MIXED, seed: int = 0, n_trees: int = 100,
                                   max_leaves: int = 31, shrinkage: float = 0.1,
                                   stats_out: dict | None = None) -> TreeEnsembleModel:
    """Retrain a tree ensemble from scratch on a stat-model-augmented set.

    Benign rows pass through.  Mixed: every malware row is paired with one
    sampled-perturbation twin (1:1).  Pure: every malware row is replaced by
    its twin.  Deterministic given the seed.
    """
    _check_mix(mix)
    examples, labels, ids = [], [], []
    n_twins = 0
    for k, (ex, label, eid) in enumerate(zip(train.examples, train.labels, train.ids)):
        if label == 0:
            examples.append(ex)
            labels.append(0)
            ids.append(eid)
            continue
        twin = sample_perturbation(stat, ex, _seed_rng(seed, 7, k))
        n_twins += 1
        if mix == MIXED:
            examples.append(ex)
            labels.append(1)
            ids.append(eid)
        examples.append(twin)
        labels.append(1)
        ids.append(eid + "+adv")
    if stats_out is not None:
        stats_out.update({"n_twins": n_twins, "n_rows": len(examples)})
    augmented = LabeledDataset(train.spec, examples, np.array(labels, dtype=int), ids)
    return train_gbdt(augmented, n_trees=n_trees, max_leaves=max_leaves, shrinkage=shrinkage)


def adaptive_attack_eval(model, toolkit: Toolkit, exploration_malware: LabeledDataset,
                         test_malware: LabeledDataset, threshold=0.5,
                         max_len: int = 10, lengths=(1, 4, 10), rng=0) -> dict:
    """Fresh adaptive greedy attack against a (possibly defended) model.

    Runs the greedy UER search on the exploration set, then reports the UER
    of the found chain's prefixes on the test set's true positives at the
    requested lengths.  Taking a strategy instead of a chain keeps defended
    models from ever being scored against a stale pre-defense chain.
    """
    from .metrics import uer as uer_op

    thr = as_threshold(threshold)
    chain, _ = greedy_uap_search_uer(model, toolkit, exploration_malware, thr,
                                     max_len=max_len, rng=rng)
    X = test_malware.dense_matrix()
    tp_rows = np.nonzero(model.score_matrix(X) >= thr.c)[0]
    if len(tp_rows) == 0:
        raise ValueError("no true positives on the test set")
    tp_set = test_malware.subset(tp_rows)
    out = {"chain": chain, "uer_by_length": {}}
    for ln in lengths:
        prefix = TransformationChain(chain.ids[: min(ln, len(chain))], max(max_len, 1))
        rep = uer_op(model, tp_set, prefix, threshold=thr, rng=rng, toolkit=toolkit)
        out["uer_by_length"][ln] = rep.uer
    return out
