"""Evasion and detection metrics, plus CSV/JSON report emission.

The universal evasion rate (UER) of a fixed perturbation over a malware set
is the fraction of examples the model classifies benign after perturbation;
parse errors leave the denominator, corrupted outcomes stay and count as
non-evasive.  Detection quality uses rank-based AUC (ties count half) and
TPR at a fixed empirical FPR budget without interpolation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .attacks import UapVector
from .data import FeatureVector, LabeledDataset
from .models.common import as_threshold
from .problem_space import (
    CORRUPTED,
    PARSE_ERROR,
    TRANSFORMED,
    Toolkit,
    TransformationChain,
    _chain_outcomes_dense,
    _normalize_seed,
)


@dataclass(frozen=True)
class EvaluationReport:
    """Counts and rates of one evaluation; uer = n_evasive / (n_total - n_parse_error)."""

    uer: float
    n_evasive: int
    n_total: int
    n_corrupted: int = 0
    n_parse_error: int = 0
    auc_roc: float | None = None
    tpr_at_fpr: dict = field(default_factory=dict)
    per_length_uer: tuple | None = None

    def __post_init__(self):
        if self.n_evasive > self.n_total:
            raise ValueError("n_evasive cannot exceed n_total")
        denom = self.n_total - self.n_parse_error
        if denom > 0 and abs(self.uer - self.n_evasive / denom) > 1e-12:
            raise ValueError("uer does not equal n_evasive / (n_total - n_parse_error)")


def uer(model, malware_set: LabeledDataset, perturbation, threshold=0.5,
        rng=0, toolkit: Toolkit | None = None, mc_reps: int = 1) -> EvaluationReport:
    """Universal evasion rate of one perturbation over a malware set.

    The perturbation is a UapVector or a TransformationChain (a chain needs
    its toolkit).  Evasive means predicted benign after perturbation.  A
    stochastic chain is evaluated with mc_reps Monte-Carlo realizations
    (default one, matching single-realization reporting); counts aggregate
    over realizations so the report invariant stays exact.
    """
    thr = as_threshold(threshold)
    if len(malware_set) == 0:
        raise ValueError("malware set is empty")
    if not np.all(malware_set.labels == 1):
        raise ValueError("malware set must contain only label-1 examples")
    if mc_reps < 1:
        raise ValueError("mc_reps must be at least 1")
    X = malware_set.dense_matrix()
    if isinstance(perturbation, UapVector):
        Xt = X.copy()
        for i in perturbation.indices:
            Xt[:, i] = 1.0
        n_evasive = int(np.sum(model.score_matrix(Xt) < thr.c)) * mc_reps
        n_total = X.shape[0] * mc_reps
        return EvaluationReport(n_evasive / n_total, n_evasive, n_total)
    if isinstance(perturbation, TransformationChain):
        if toolkit is None:
            raise ValueError("evaluating a chain requires its toolkit")
        seed = _normalize_seed(rng)
        n_evasive = n_corrupted = n_parse = 0
        n_total = X.shape[0] * mc_reps
        for rep in range(mc_reps):
            statuses, Xt = _chain_outcomes_dense(X, perturbation.ids, toolkit, seed, (rep,))
            ok = np.array([s == TRANSFORMED for s in statuses])
            n_corrupted += int(np.sum([s == CORRUPTED for s in statuses]))
            n_parse += int(np.sum([s == PARSE_ERROR for s in statuses]))
            if ok.any():
                n_evasive += int(np.sum(model.score_matrix(Xt[ok]) < thr.c))
        denom = n_total - n_parse
        return EvaluationReport(
            n_evasive / denom if denom else 0.0, n_evasive, n_total, n_corrupted, n_parse
        )
    raise ValueError(f"unsupported perturbation type {type(perturbation).__name__}")


def auc_roc(scores, labels) -> float:
    """Area under the ROC curve, rank-based (ties count half a concordant pair)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc_roc needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def tpr_at_fpr(scores, labels, fpr_level: float) -> float:
    """TPR at the operating point with the best TPR among thresholds whose
    empirical FPR stays within fpr_level; candidate thresholds are the
    observed scores (plus an above-all guard), labels use score >= threshold,
    and no interpolation is applied."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if not 0.0 <= fpr_level <= 1.0:
        raise ValueError("fpr_level must lie in [0, 1]")
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("tpr_at_fpr needs both classes present")
    best_tpr = 0.0
    for thr in np.unique(scores):  # ascending; feasibility is upward-closed in thr
        fpr = float(np.mean(neg >= thr))
        if fpr <= fpr_level:
            return float(np.mean(pos >= thr))  # smallest feasible threshold maximizes TPR
    return best_tpr


@dataclass(frozen=True)
class DeltaVariationSummary:
    """Mean absolute per-feature change of a chain over surviving outcomes."""

    per_feature_mean_abs_change: np.ndarray
    mean_fraction_modified: float
    n_surviving: int


def delta_variation(clean_set: LabeledDataset, chain: TransformationChain,
                    toolkit: Toolkit, rng=0) -> DeltaVariationSummary:
    """Mean |x' - x| per feature, and the mean fraction of features modified,
    over outcomes that survive the chain (corrupted/parse errors are skipped)."""
    if len(clean_set) == 0:
        raise ValueError("clean set is empty")
    seed = _normalize_seed(rng)
    X = clean_set.dense_matrix()
    statuses, Xt = _chain_outcomes_dense(X, chain.ids, toolkit, seed, ())
    ok = np.array([s == TRANSFORMED for s in statuses])
    n_ok = int(np.sum(ok))
    if n_ok == 0:
        return DeltaVariationSummary(np.zeros(X.shape[1]), 0.0, 0)
    diff = np.abs(Xt[ok] - X[ok])
    return DeltaVariationSummary(
        diff.mean(axis=0),
        float(np.mean(np.mean(diff > 0.0, axis=1))),
        n_ok,
    )


def delta_variation_matrix(clean_set: LabeledDataset, chains, toolkit: Toolkit, rng=0) -> np.ndarray:
    """(n_features, n_chains) matrix of per-feature mean absolute change, for heatmaps."""
    seed = _normalize_seed(rng)
    cols = [delta_variation(clean_set, ch, toolkit, seed + k).per_feature_mean_abs_change
            for k, ch in enumerate(chains)]
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class IncidenceSummary:
    """Per feature group: fraction of qualifying transformations touching the group."""

    fractions: dict
    n_qualifying: int
    qualifying_ids: tuple
    empty: bool


def _perturbs_feature(effect, i: int, baseline: FeatureVector) -> bool:
    from .problem_space import DeterministicMask

    if isinstance(effect, DeterministicMask):
        return i in effect.set_features and baseline.get(i) != 1.0
    for e in effect.entries:
        if e.feature == i and e.probability > 0.0:
            if e.sampler == "set_to_one":
                return baseline.get(i) != 1.0
            return not (e.lo == e.hi == 0.0 and e.sampler == "add_uniform")
    return False


def incidence_by_group(toolkit: Toolkit, uer_per_transformation: dict,
                       baseline_vector: FeatureVector, uer_threshold: float = 0.9) -> IncidenceSummary:
    """Among transformations with UER >= uer_threshold, the fraction that
    perturb at least one feature of each group relative to a baseline vector.
    An empty qualifying set is flagged, with all fractions zero."""
    groups = baseline_vector.spec.group_names()
    qualifying = [t for t in toolkit.transformations
                  if uer_per_transformation.get(t.id, 0.0) >= uer_threshold]
    if not qualifying:
        return IncidenceSummary({g: 0.0 for g in groups}, 0, (), True)
    fractions = {}
    for g in groups:
        members = [i for i, gg in enumerate(baseline_vector.spec.feature_groups) if gg == g]
        hits = sum(
            1 for t in qualifying
            if any(_perturbs_feature(t.effect, i, baseline_vector) for i in members)
        )
        fractions[g] = hits / len(qualifying)
    return IncidenceSummary(fractions, len(qualifying), tuple(t.id for t in qualifying), False)


@dataclass(frozen=True)
class L0DistortionSummary:
    """Distortion per qualifying transformation, with a unit-bin histogram."""

    distortion_by_id: dict
    bin_edges: np.ndarray
    bin_counts: np.ndarray
    mean: float
    median: float


def l0_distortion_distribution(toolkit: Toolkit, uer_per_transformation: dict,
                               uer_threshold: float = 0.9) -> L0DistortionSummary:
    """L0 distortion of each transformation with UER >= threshold, measured
    on an all-zeros reference: mask size for deterministic masks, expected
    number of modified features for stochastic effects."""
    from .problem_space import DeterministicMask

    values = {}
    for t in toolkit.transformations:
        if uer_per_transformation.get(t.id, 0.0) < uer_threshold:
            continue
        if isinstance(t.effect, DeterministicMask):
            values[t.id] = float(len(t.effect.set_features))
        else:
            expected = 0.0
            for e in t.effect.entries:  # from 0, any sampled change is counted
                if e.sampler == "add_uniform" and e.lo == e.hi == 0.0:
                    continue
                expected += e.probability
            values[t.id] = expected
    if not values:
        return L0DistortionSummary({}, np.zeros(1), np.zeros(0, dtype=int), 0.0, 0.0)
    vals = np.array(list(values.values()))
    hi = int(np.ceil(vals.max())) + 1
    edges = np.arange(0, hi + 1, dtype=np.float64)
    counts, _ = np.histogram(vals, bins=edges)
    return L0DistortionSummary(values, edges, counts, float(vals.mean()), float(np.median(vals)))


@dataclass(frozen=True)
class PerTransformationUer:
    """Single-transformation UERs and their 10%-bin histogram."""

    uer_by_id: dict
    bin_edges: np.ndarray
    bin_counts: np.ndarray


def per_transformation_uer_histogram(model, toolkit: Toolkit, test_malware: LabeledDataset,
                                     threshold=0.5, rng=0) -> PerTransformationUer:
    """UER of every length-1 chain, bucketed into ten bins of width 0.1."""
    seed = _normalize_seed(rng)
    uers = {}
    for t in toolkit.transformations:
        rep = uer(model, test_malware, TransformationChain((t.id,), 1),
                  threshold=threshold, rng=seed, toolkit=toolkit)
        uers[t.id] = rep.uer
    edges = np.linspace(0.0, 1.0, 11)
    counts, _ = np.histogram(np.array(list(uers.values())), bins=edges)
    return PerTransformationUer(uers, edges, counts)


# ---------------------------------------------------------------------------
# emission


def report_to_dict(report: EvaluationReport) -> dict:
    d = asdict(report)
    if report.per_length_uer is not None:
        d["per_length_uer"] = list(report.per_length_uer)
    d["tpr_at_fpr"] = {str(k): v for k, v in report.tpr_at_fpr.items()}
    return d


def write_report_json(report: EvaluationReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(report_to_dict(report), f, indent=2, sort_keys=True)
        f.write("\n")


SUMMARY_COLUMNS = ("name", "auc_roc", "tpr_at_fpr", "uer_1", "uer_4", "uer_10")


def write_summary_csv(rows: list, path) -> None:
    """One row per model: name, AUC-ROC, TPR@FPR, and UER at lengths 1, 4, 10.

    Each row is a dict with SUMMARY_COLUMNS keys; missing values stay blank.
    """
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in SUMMARY_COLUMNS})


def write_matrix_csv(matrix: np.ndarray, row_labels, col_labels, path, corner: str = "") -> None:
    """Dense matrix as CSV with one header row and one label column."""
    matrix = np.asarray(matrix)
    if matrix.shape != (len(row_labels), len(col_labels)):
        raise ValueError("matrix shape does not match labels")
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow([corner, *col_labels])
        for lab, row in zip(row_labels, matrix):
            w.writerow([lab, *[repr(float(v)) for v in row]])
