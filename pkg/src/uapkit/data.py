"""Feature spaces, sparse feature vectors, datasets, splits, and synthetic data.

A feature space is a fixed-length list of features, each either binary
(values 0/1) or continuous, and each assigned to a named group (used by
incidence reports).  Feature vectors are sparse maps index -> value; an
absent index means 0.  Datasets pair vectors with 0/1 labels (1 = malware)
and string ids.  All objects here are treated as immutable after
construction; operations return new objects.

File formats
------------
Datasets use a sparse text format, one example per line::

    <label> <idx>:<value> <idx>:<value> ...

with strictly increasing indices, '#' comment lines, and LF endings.
Binary values are written as ``1`` and zero entries are omitted, so
save(load(path)) is byte-identical for canonical files.

The sidecar feature-space file is key=value text with run-length encoded
kinds and groups::

    version=1
    n_features=500
    feature_kinds=binary:460,continuous:40
    feature_groups=goodware_indicative:40,malware_indicative:40,background:380,continuous:40
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BINARY = "binary"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class FeatureSpaceSpec:
    """Shape of a feature space: per-feature kind and group label."""

    n_features: int
    feature_kinds: tuple[str, ...]
    feature_groups: tuple[str, ...]

    def __post_init__(self):
        if self.n_features <= 0:
            raise ValueError("n_features must be positive")
        if len(self.feature_kinds) != self.n_features:
            raise ValueError("feature_kinds length must equal n_features")
        if len(self.feature_groups) != self.n_features:
            raise ValueError("feature_groups length must equal n_features")
        for k in self.feature_kinds:
            if k not in (BINARY, CONTINUOUS):
                raise ValueError(f"unknown feature kind {k!r}")
        for g in self.feature_groups:
            if not g:
                raise ValueError("feature group labels must be non-empty")
        object.__setattr__(self, "feature_kinds", tuple(self.feature_kinds))
        object.__setattr__(self, "feature_groups", tuple(self.feature_groups))

    @property
    def binary_indices(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.feature_kinds) if k == BINARY], dtype=int)

    def group_names(self) -> tuple[str, ...]:
        seen: list[str] = []
        for g in self.feature_groups:
            if g not in seen:
                seen.append(g)
        return tuple(seen)


class FeatureVector:
    """Sparse feature vector over a FeatureSpaceSpec; absent index means 0."""

    __slots__ = ("spec", "values")

    def __init__(self, spec: FeatureSpaceSpec, values: dict[int, float]):
        self.spec = spec
        vals: dict[int, float] = {}
        for i, v in values.items():
            i = int(i)
            if not 0 <= i < spec.n_features:
                raise ValueError(f"feature index {i} out of range for n_features={spec.n_features}")
            v = float(v)
            if spec.feature_kinds[i] == BINARY and v not in (0.0, 1.0):
                raise ValueError(f"binary feature {i} holds non-binary value {v}")
            if v != 0.0:
                vals[i] = v
        self.values = vals

    def get(self, i: int) -> float:
        return self.values.get(i, 0.0)

    def to_dense(self) -> np.ndarray:
        x = np.zeros(self.spec.n_features, dtype=np.float64)
        if self.values:
            idx = np.fromiter(self.values.keys(), dtype=int, count=len(self.values))
            x[idx] = np.fromiter(self.values.values(), dtype=np.float64, count=len(self.values))
        return x

    @classmethod
    def from_dense(cls, spec: FeatureSpaceSpec, x: np.ndarray) -> "FeatureVector":
        nz = np.nonzero(x)[0]
        return cls(spec, {int(i): float(x[i]) for i in nz})

    def __eq__(self, other):
        return (
            isinstance(other, FeatureVector)
            and self.spec == other.spec
            and self.values == other.values
        )

    def __repr__(self):
        return f"FeatureVector({len(self.values)} nonzero of {self.spec.n_features})"


class LabeledDataset:
    """Immutable list of feature vectors with 0/1 labels and string ids."""

    __slots__ = ("spec", "examples", "labels", "ids", "_dense")

    def __init__(self, spec: FeatureSpaceSpec, examples, labels, ids):
        examples = tuple(examples)
        labels = np.asarray(labels, dtype=np.int64)
        ids = tuple(str(s) for s in ids)
        if not (len(examples) == len(labels) == len(ids)):
            raise ValueError("examples, labels and ids must have equal length")
        for ex in examples:
            if ex.spec != spec:
                raise ValueError("example feature space does not match dataset spec")
        bad = set(np.unique(labels)) - {0, 1}
        if bad:
            raise ValueError(f"labels must be 0 or 1, got {sorted(bad)}")
        if len(set(ids)) != len(ids):
            raise ValueError("example ids must be unique")
        self.spec = spec
        self.examples = examples
        self.labels = labels
        self.ids = ids
        self._dense = None

    def __len__(self):
        return len(self.examples)

    def dense_matrix(self) -> np.ndarray:
        """Dense (n_examples, n_features) float64 matrix, cached."""
        if self._dense is None:
            X = np.zeros((len(self.examples), self.spec.n_features), dtype=np.float64)
            for r, ex in enumerate(self.examples):
                for i, v in ex.values.items():
                    X[r, i] = v
            self._dense = X
        return self._dense

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=int)
        return LabeledDataset(
            self.spec,
            [self.examples[i] for i in indices],
            self.labels[indices],
            [self.ids[i] for i in indices],
        )

    def malware_only(self) -> "LabeledDataset":
        return self.subset(np.nonzero(self.labels == 1)[0])

    def benign_only(self) -> "LabeledDataset":
        return self.subset(np.nonzero(self.labels == 0)[0])


@dataclass(frozen=True)
class SplitPlan:
    """Train/exploration/test fractions, stratification flag and seed."""

    train_fraction: float
    exploration_fraction: float
    test_fraction: float
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.exploration_fraction, self.test_fraction)
        for f in fr:
            if not 0.0 < f < 1.0:
                raise ValueError("split fractions must lie in (0, 1)")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1 within 1e-9")


def largest_remainder_counts(n: int, fractions) -> list[int]:
    """Apportion n items to len(fractions) buckets; ties go to the earlier bucket."""
    exact = [n * f for f in fractions]
    base = [int(np.floor(e + 1e-9)) for e in exact]
    rem = [e - b for e, b in zip(exact, base)]
    leftover = n - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (-rem[i], i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def make_split(dataset: LabeledDataset, plan: SplitPlan):
    """Partition a dataset into (train, exploration, test) per a SplitPlan.

    Deterministic given plan.seed.  Rounding uses the largest-remainder rule
    with ties toward the earlier split, so stratified per-class counts stay
    within one example of the requested fractions.
    """
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    fractions = (plan.train_fraction, plan.exploration_fraction, plan.test_fraction)
    rng = np.random.default_rng(plan.seed)
    if plan.stratified:
        class0 = np.nonzero(dataset.labels == 0)[0]
        class1 = np.nonzero(dataset.labels == 1)[0]
        if len(class0) == 0 or len(class1) == 0:
            raise ValueError("stratified split requires both classes present")
        groups = [class0, class1]
    else:
        groups = [np.arange(len(dataset))]
    buckets: list[list[int]] = [[], [], []]
    for g in groups:
        perm = g[rng.permutation(len(g))]
        counts = largest_remainder_counts(len(g), fractions)
        start = 0
        for b, c in enumerate(counts):
            buckets[b].extend(perm[start : start + c].tolist())
            start += c
    out = []
    for b in buckets:
        out.append(dataset.subset(sorted(b)))
    return tuple(out)


@dataclass(frozen=True)
class SyntheticDatasetConfig:
    """Parameters of the planted-feature synthetic generator.

    Feature layout, in index order: n_goodware_indicative binary features,
    then n_malware_indicative binary features, then n_continuous continuous
    features, then background binary features filling up to n_features.
    Goodware-indicative features are 1 with probability p_on_in_own_class in
    benign rows and p_on_in_other_class in malware rows; malware-indicative
    features are symmetric.  Background features are 1 with probability
    p_background in both classes.  Continuous features are uniform on
    class-conditional ranges.
    """

    n_features: int
    n_benign: int
    n_malware: int
    n_goodware_indicative: int
    n_malware_indicative: int = 0
    p_on_in_own_class: float = 0.8
    p_on_in_other_class: float = 0.02
    n_continuous: int = 0
    p_background: float = 0.05
    continuous_benign_range: tuple[float, float] = (0.0, 0.6)
    continuous_malware_range: tuple[float, float] = (0.4, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_features <= 0:
            raise ValueError("n_features must be positive")
        if self.n_benign < 0 or self.n_malware < 0:
            raise ValueError("row counts must be non-negative")
        planted = self.n_goodware_indicative + self.n_malware_indicative + self.n_continuous
        if planted > self.n_features:
            raise ValueError("planted feature blocks exceed n_features")
        for p in (self.p_on_in_own_class, self.p_on_in_other_class, self.p_background):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if not self.p_on_in_own_class > self.p_on_in_other_class:
            raise ValueError("p_on_in_own_class must exceed p_on_in_other_class")
        for lo, hi in (self.continuous_benign_range, self.continuous_malware_range):
            if not lo <= hi:
                raise ValueError("continuous range must satisfy lo <= hi")


def synthetic_feature_spec(cfg: SyntheticDatasetConfig) -> FeatureSpaceSpec:
    """Feature space implied by a SyntheticDatasetConfig, with role groups."""
    ng, nm, nc = cfg.n_goodware_indicative, cfg.n_malware_indicative, cfg.n_continuous
    nb = cfg.n_features - ng - nm - nc
    kinds = [BINARY] * ng + [BINARY] * nm + [CONTINUOUS] * nc + [BINARY] * nb
    groups = (
        ["goodware_indicative"] * ng
        + ["malware_indicative"] * nm
        + ["continuous"] * nc
        + ["background"] * nb
    )
    return FeatureSpaceSpec(cfg.n_features, tuple(kinds), tuple(groups))


def synthesize_dataset(cfg: SyntheticDatasetConfig, spec: FeatureSpaceSpec | None = None) -> LabeledDataset:
    """Draw a labeled dataset from the planted-feature generator.

    Deterministic given cfg.seed.  A custom spec may relabel groups but must
    match the layout implied by the config (same kinds per index).
    """
    implied = synthetic_feature_spec(cfg)
    if spec is None:
        spec = implied
    elif spec.n_features != implied.n_features or spec.feature_kinds != implied.feature_kinds:
        raise ValueError("custom spec does not match the layout implied by the config")
    rng = np.random.default_rng(cfg.seed)
    ng, nm, nc = cfg.n_goodware_indicative, cfg.n_malware_indicative, cfg.n_continuous
    nb = cfg.n_features - ng - nm - nc
    n = cfg.n_benign + cfg.n_malware
    X = np.zeros((n, cfg.n_features), dtype=np.float64)
    y = np.concatenate([np.zeros(cfg.n_benign, dtype=int), np.ones(cfg.n_malware, dtype=int)])
    is_mal = y == 1
    # planted binary blocks
    p_good = np.where(is_mal, cfg.p_on_in_other_class, cfg.p_on_in_own_class)
    p_mal = np.where(is_mal, cfg.p_on_in_own_class, cfg.p_on_in_other_class)
    if ng:
        X[:, 0:ng] = rng.random((n, ng)) < p_good[:, None]
    if nm:
        X[:, ng : ng + nm] = rng.random((n, nm)) < p_mal[:, None]
    if nc:
        lo = np.where(is_mal, cfg.continuous_malware_range[0], cfg.continuous_benign_range[0])
        hi = np.where(is_mal, cfg.continuous_malware_range[1], cfg.continuous_benign_range[1])
        X[:, ng + nm : ng + nm + nc] = lo[:, None] + rng.random((n, nc)) * (hi - lo)[:, None]
    if nb:
        X[:, ng + nm + nc :] = rng.random((n, nb)) < cfg.p_background
    examples = [FeatureVector.from_dense(spec, X[r]) for r in range(n)]
    ids = [f"b{r:05d}" for r in range(cfg.n_benign)] + [f"m{r:05d}" for r in range(cfg.n_malware)]
    return LabeledDataset(spec, examples, y, ids)


def l0_distance(a: FeatureVector, b: FeatureVector) -> int:
    """Number of feature indices where two vectors differ (exact inequality)."""
    if a.spec != b.spec:
        raise ValueError("vectors live in different feature spaces")
    count = 0
    for i in a.values.keys() | b.values.keys():
        if a.values.get(i, 0.0) != b.values.get(i, 0.0):
            count += 1
    return count


# ---------------------------------------------------------------------------
# sparse dataset text format


def _format_value(kind: str, v: float) -> str:
    if kind == BINARY:
        return "1"
    return repr(v)


def save_sparse_dataset(dataset: LabeledDataset, path) -> None:
    """Write a dataset in the sparse text format (canonical form)."""
    lines = []
    for ex, label in zip(dataset.examples, dataset.labels):
        parts = [str(int(label))]
        for i in sorted(ex.values):
            parts.append(f"{i}:{_format_value(dataset.spec.feature_kinds[i], ex.values[i])}")
        lines.append(" ".join(parts))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines))
        if lines:
            f.write("\n")


def load_sparse_dataset(path, spec: FeatureSpaceSpec) -> LabeledDataset:
    """Parse the sparse text format; errors name the offending 1-based line."""
    examples: list[FeatureVector] = []
    labels: list[int] = []
    ids: list[str] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            tokens = line.split()
            if tokens[0] not in ("0", "1"):
                raise ValueError(f"line {lineno}: label must be 0 or 1, got {tokens[0]!r}")
            label = int(tokens[0])
            values: dict[int, float] = {}
            prev = -1
            for tok in tokens[1:]:
                if ":" not in tok:
                    raise ValueError(f"line {lineno}: malformed token {tok!r}")
                idx_s, val_s = tok.split(":", 1)
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise ValueError(f"line {lineno}: malformed token {tok!r}") from None
                if idx >= spec.n_features or idx < 0:
                    raise ValueError(
                        f"line {lineno}: feature index {idx} out of range for n_features={spec.n_features}"
                    )
                if idx <= prev:
                    raise ValueError(f"line {lineno}: indices must be strictly increasing")
                prev = idx
                if spec.feature_kinds[idx] == BINARY and val not in (0.0, 1.0):
                    raise ValueError(f"line {lineno}: non-binary value {val} on binary feature {idx}")
                if not np.isfinite(val):
                    raise ValueError(f"line {lineno}: non-finite value on feature {idx}")
                values[idx] = val
            examples.append(FeatureVector(spec, values))
            labels.append(label)
            ids.append(f"line{lineno:06d}")
    return LabeledDataset(spec, examples, np.array(labels, dtype=int), ids)


def _rle_encode(items) -> str:
    runs: list[str] = []
    prev = None
    count = 0
    for it in items:
        if "," in it or ":" in it or any(c.isspace() for c in it):
            raise ValueError(f"label {it!r} may not contain ',', ':' or whitespace")
        if it == prev:
            count += 1
        else:
            if prev is not None:
                runs.append(f"{prev}:{count}")
            prev, count = it, 1
    if prev is not None:
        runs.append(f"{prev}:{count}")
    return ",".join(runs)


def _rle_decode(text: str, what: str) -> list[str]:
    out: list[str] = []
    for part in text.split(","):
        if ":" not in part:
            raise ValueError(f"malformed {what} run {part!r}")
        name, count_s = part.rsplit(":", 1)
        try:
            count = int(count_s)
        except ValueError:
            raise ValueError(f"malformed {what} run {part!r}") from None
        if count <= 0 or not name:
            raise ValueError(f"malformed {what} run {part!r}")
        out.extend([name] * count)
    return out


def save_feature_spec(spec: FeatureSpaceSpec, path) -> None:
    """Write the sidecar key=value feature-space file."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("version=1\n")
        f.write(f"n_features={spec.n_features}\n")
        f.write(f"feature_kinds={_rle_encode(spec.feature_kinds)}\n")
        f.write(f"feature_groups={_rle_encode(spec.feature_groups)}\n")


def load_feature_spec(path) -> FeatureSpaceSpec:
    """Parse the sidecar key=value feature-space file."""
    fields: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value")
            k, v = line.split("=", 1)
            fields[k.strip()] = v.strip()
    for key in ("version", "n_features", "feature_kinds", "feature_groups"):
        if key not in fields:
            raise ValueError(f"feature-space file missing key {key!r}")
    if fields["version"] != "1":
        raise ValueError(f"unsupported feature-space file version {fields['version']!r}")
    n = int(fields["n_features"])
    kinds = _rle_decode(fields["feature_kinds"], "feature_kinds")
    groups = _rle_decode(fields["feature_groups"], "feature_groups")
    if len(kinds) != n or len(groups) != n:
        raise ValueError("run-length encoded kinds/groups do not cover n_features")
    return FeatureSpaceSpec(n, tuple(kinds), tuple(groups))
