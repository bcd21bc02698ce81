"""Problem-space transformations, toolkits, and chain search strategies.

A transformation models what a real program manipulation does to the
feature vector: either a deterministic add-only mask over binary features,
or a stochastic effect with per-feature modification probabilities and
delta samplers, plus probabilities that the manipulation corrupts the
object or makes it unparseable.  Chains apply transformations in order and
abort on the first corruption or parse error.  Search strategies look for a
single chain that evades a model across a whole exploration set.

Randomness design: chain evaluations inside searches derive one RNG stream
per (step or chain, example) from the base seed, so candidate comparisons
are paired (common random numbers) and results do not depend on evaluation
order.

Toolkit files are line-based text (see save_toolkit).  A bundled file,
``windows_toolkit_v1.toolkit``, encodes a ten-transformation Windows-like
toolkit over the reference feature space from windows_feature_spec().
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .data import BINARY, CONTINUOUS, FeatureSpaceSpec, FeatureVector, LabeledDataset
from .models.common import as_threshold

MAX_CHAIN_LEN = 10

SET_TO_ONE = "set_to_one"
ADD_UNIFORM = "add_uniform"
SET_UNIFORM = "set_uniform"

TRANSFORMED = "transformed"
CORRUPTED = "corrupted"
PARSE_ERROR = "parse_error"


@dataclass(frozen=True)
class EffectEntry:
    """One stochastic per-feature effect: with probability, apply the sampler."""

    feature: int
    probability: float
    sampler: str
    lo: float = 0.0
    hi: float = 0.0

    def __post_init__(self):
        if self.feature < 0:
            raise ValueError("feature index must be non-negative")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("modify probability must lie in [0, 1]")
        if self.sampler not in (SET_TO_ONE, ADD_UNIFORM, SET_UNIFORM):
            raise ValueError(f"unknown delta sampler {self.sampler!r}")
        if self.sampler != SET_TO_ONE and self.lo > self.hi:
            raise ValueError("sampler range must satisfy lo <= hi")


@dataclass(frozen=True)
class DeterministicMask:
    """Add-only index set over binary features; never corrupts."""

    set_features: frozenset

    def __post_init__(self):
        object.__setattr__(self, "set_features", frozenset(int(i) for i in self.set_features))
        for i in self.set_features:
            if i < 0:
                raise ValueError("mask feature index must be non-negative")


@dataclass(frozen=True)
class StochasticEffect:
    """Per-feature stochastic modifications plus corruption/parse-error risk."""

    entries: tuple
    corruption_probability: float = 0.0
    parse_error_probability: float = 0.0

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=lambda e: e.feature))
        feats = [e.feature for e in entries]
        if len(set(feats)) != len(feats):
            raise ValueError("duplicate feature in stochastic effect entries")
        object.__setattr__(self, "entries", entries)
        for p in (self.corruption_probability, self.parse_error_probability):
            if not 0.0 <= p <= 1.0:
                raise ValueError("corruption and parse-error probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class Transformation:
    id: int
    name: str
    effect: object  # DeterministicMask | StochasticEffect

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("transformation id must be non-negative")
        if not self.name:
            raise ValueError("transformation name must be non-empty")
        if not isinstance(self.effect, (DeterministicMask, StochasticEffect)):
            raise ValueError("effect must be a DeterministicMask or StochasticEffect")


@dataclass(frozen=True)
class Toolkit:
    """Transformations with unique ids, bound to one feature space."""

    spec: FeatureSpaceSpec
    transformations: tuple

    def __post_init__(self):
        ts = tuple(self.transformations)
        object.__setattr__(self, "transformations", ts)
        ids = [t.id for t in ts]
        if len(set(ids)) != len(ids):
            raise ValueError("transformation ids must be unique")
        for t in ts:
            if isinstance(t.effect, DeterministicMask):
                for i in t.effect.set_features:
                    if i >= self.spec.n_features:
                        raise ValueError(f"mask index {i} out of range in {t.name!r}")
                    if self.spec.feature_kinds[i] != BINARY:
                        raise ValueError(f"mask touches non-binary feature {i} in {t.name!r}")
            else:
                for e in t.effect.entries:
                    if e.feature >= self.spec.n_features:
                        raise ValueError(f"effect index {e.feature} out of range in {t.name!r}")
                    kind = self.spec.feature_kinds[e.feature]
                    if kind == BINARY and e.sampler != SET_TO_ONE:
                        raise ValueError(
                            f"binary feature {e.feature} only supports set_to_one in {t.name!r}"
                        )

    def __len__(self):
        return len(self.transformations)

    def by_id(self, tid: int) -> Transformation:
        for t in self.transformations:
            if t.id == tid:
                return t
        raise ValueError(f"unknown transformation id {tid}")

    @property
    def ids(self) -> tuple:
        return tuple(t.id for t in self.transformations)

    def all_deterministic(self) -> bool:
        return all(isinstance(t.effect, DeterministicMask) for t in self.transformations)


@dataclass(frozen=True)
class TransformationChain:
    """Ordered transformation ids, applied first to last; bounded length."""

    ids: tuple
    max_len: int = MAX_CHAIN_LEN

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if self.max_len < 0:
            raise ValueError("max_len must be non-negative")
        if len(self.ids) > self.max_len:
            raise ValueError(f"chain length {len(self.ids)} exceeds max {self.max_len}")

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class ApplicationOutcome:
    """Result of applying a transformation or chain: transformed, corrupted, or parse error."""

    status: str
    vector: object = None

    @classmethod
    def transformed(cls, v: FeatureVector) -> "ApplicationOutcome":
        return cls(TRANSFORMED, v)

    @classmethod
    def corrupted(cls) -> "ApplicationOutcome":
        return cls(CORRUPTED)

    @classmethod
    def parse_error(cls) -> "ApplicationOutcome":
        return cls(PARSE_ERROR)

    @property
    def is_transformed(self) -> bool:
        return self.status == TRANSFORMED


def _apply_effect_dense(x: np.ndarray, effect, rng) -> str:
    """Mutate a dense vector in place; returns the outcome status.

    Draw order is fixed: parse error, corruption, then entries in ascending
    feature order, so equal seeds give equal outcomes.
    """
    if isinstance(effect, DeterministicMask):
        for i in effect.set_features:
            x[i] = 1.0
        return TRANSFORMED
    if effect.parse_error_probability > 0.0 and rng.random() < effect.parse_error_probability:
        return PARSE_ERROR
    if effect.corruption_probability > 0.0 and rng.random() < effect.corruption_probability:
        return CORRUPTED
    for e in effect.entries:
        if rng.random() < e.probability:
            if e.sampler == SET_TO_ONE:
                x[e.feature] = 1.0
            elif e.sampler == ADD_UNIFORM:
                x[e.feature] += rng.uniform(e.lo, e.hi)
            else:
                x[e.feature] = rng.uniform(e.lo, e.hi)
    return TRANSFORMED


def apply_transformation(x: FeatureVector, t: Transformation, rng) -> ApplicationOutcome:
    """Apply one transformation; deterministic given the generator state."""
    dense = x.to_dense()
    status = _apply_effect_dense(dense, t.effect, rng)
    if status == TRANSFORMED:
        return ApplicationOutcome.transformed(FeatureVector.from_dense(x.spec, dense))
    return ApplicationOutcome(status)


def apply_chain(x: FeatureVector, chain: TransformationChain, toolkit: Toolkit, rng) -> ApplicationOutcome:
    """Apply a chain first to last, aborting on the first corruption or parse error.

    Applying a prefix and then the suffix with the same generator equals
    applying the whole chain, because draws are consumed sequentially.
    """
    dense = x.to_dense()
    for tid in chain.ids:
        status = _apply_effect_dense(dense, toolkit.by_id(tid).effect, rng)
        if status != TRANSFORMED:
            return ApplicationOutcome(status)
    return ApplicationOutcome.transformed(FeatureVector.from_dense(x.spec, dense))


# ---------------------------------------------------------------------------
# seeded evaluation helpers


def _seed_rng(base_seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in key)))


def _normalize_seed(rng) -> int:
    """Accept an int seed or a Generator; a Generator contributes one draw."""
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    return int(rng)


def _mask_matrix(toolkit: Toolkit) -> dict:
    masks = {}
    for t in toolkit.transformations:
        m = np.zeros(toolkit.spec.n_features, dtype=np.float64)
        for i in t.effect.set_features:
            m[i] = 1.0
        masks[t.id] = m
    return masks


def _effect_map(toolkit: Toolkit) -> dict:
    return {t.id: t.effect for t in toolkit.transformations}


def _chain_outcomes_dense(X: np.ndarray, ids, toolkit: Toolkit, seed: int, key_prefix) -> tuple:
    """Apply one candidate chain to every row; returns (statuses, transformed matrix).

    Row i uses the stream (base seed, *key_prefix, i).  Corrupted or
    parse-error rows keep their clean values in the matrix but are flagged.
    """
    n = X.shape[0]
    out = X.copy()
    statuses = np.empty(n, dtype=object)
    effects = _effect_map(toolkit)
    for tid in ids:
        if tid not in effects:
            raise ValueError(f"unknown transformation id {tid}")
    for i in range(n):
        rng = _seed_rng(seed, *key_prefix, i)
        xi = out[i]
        status = TRANSFORMED
        for tid in ids:
            status = _apply_effect_dense(xi, effects[tid], rng)
            if status != TRANSFORMED:
                break
        statuses[i] = status
    return statuses, out


def _chain_uer_dense(model, X, ids, toolkit, c, seed, key_prefix, masks=None) -> float:
    """UER of one chain over a matrix of malware rows.

    Corrupted and parse-error rows count as non-evasive; the denominator is
    every row.  Deterministic toolkits take a vectorized path.
    """
    n = X.shape[0]
    if masks is not None:
        Xt = X.copy()
        for tid in ids:
            np.maximum(Xt, masks[tid], out=Xt)
        return float(np.mean(model.score_matrix(Xt) < c))
    statuses, Xt = _chain_outcomes_dense(X, ids, toolkit, seed, key_prefix)
    ok = np.array([s == TRANSFORMED for s in statuses])
    if not ok.any():
        return 0.0
    evasive = model.score_matrix(Xt[ok]) < c
    return float(np.sum(evasive)) / n


def _chain_mean_score_dense(model, X, ids, toolkit, seed, key_prefix, masks=None) -> float:
    """Mean malware score of one chain; corrupted/parse-error rows score 1.0."""
    if masks is not None:
        Xt = X.copy()
        for tid in ids:
            np.maximum(Xt, masks[tid], out=Xt)
        return float(np.mean(model.score_matrix(Xt)))
    statuses, Xt = _chain_outcomes_dense(X, ids, toolkit, seed, key_prefix)
    ok = np.array([s == TRANSFORMED for s in statuses])
    scores = np.ones(X.shape[0], dtype=np.float64)
    if ok.any():
        scores[ok] = model.score_matrix(Xt[ok])
    return float(np.mean(scores))


def _require_malware(malware_set: LabeledDataset):
    if len(malware_set) == 0:
        raise ValueError("exploration set is empty")
    if not np.all(malware_set.labels == 1):
        raise ValueError("exploration set must contain only label-1 examples")


# ---------------------------------------------------------------------------
# searches


def greedy_uap_search_uer(model, toolkit: Toolkit, exploration_malware: LabeledDataset,
                          threshold=0.5, max_len: int = MAX_CHAIN_LEN, rng=0):
    """Greedy chain search maximizing evasion rate over the exploration set.

    At each step every transformation is tried as an extension; the one with
    the highest UER wins (ties to the lowest id) and is kept only if it
    strictly improves.  Stops at max_len, at 100% UER, or when no extension
    improves.  Candidates within a step share per-example streams, so the
    comparison is paired.  Returns (chain, per-step UER trace).
    """
    _require_malware(exploration_malware)
    if len(toolkit) == 0:
        raise ValueError("toolkit is empty")
    thr = as_threshold(threshold)
    seed = _normalize_seed(rng)
    X = exploration_malware.dense_matrix()
    masks = _mask_matrix(toolkit) if toolkit.all_deterministic() else None
    chain: list[int] = []
    trace: list[float] = []
    # baseline: rows that already evade; an extension must beat this strictly
    current = float(np.mean(model.score_matrix(X) < thr.c))
    for step in range(max_len):
        best_uer, best_id = -1.0, None
        for t in toolkit.transformations:
            u = _chain_uer_dense(model, X, chain + [t.id], toolkit, thr.c, seed, (step,), masks)
            if u > best_uer:
                best_uer, best_id = u, t.id
        if best_uer <= current:
            break
        chain.append(best_id)
        trace.append(best_uer)
        current = best_uer
        if current >= 1.0:
            break
    return TransformationChain(tuple(chain), max(max_len, len(chain))), trace


def greedy_uap_search_confidence(model, toolkit: Toolkit, exploration_malware: LabeledDataset,
                                 max_len: int = MAX_CHAIN_LEN, rng=0):
    """Greedy chain search minimizing mean malware score ("soft labels").

    Corrupted and parse-error outcomes contribute a score of 1.0, so
    corruption-heavy transformations are penalized.  Always extends with the
    best candidate (ties to the lowest id) until max_len.  Returns
    (chain, per-step mean-score trace).
    """
    _require_malware(exploration_malware)
    if len(toolkit) == 0:
        raise ValueError("toolkit is empty")
    seed = _normalize_seed(rng)
    X = exploration_malware.dense_matrix()
    masks = _mask_matrix(toolkit) if toolkit.all_deterministic() else None
    chain: list[int] = []
    trace: list[float] = []
    for step in range(max_len):
        best_score, best_id = np.inf, None
        for t in toolkit.transformations:
            s = _chain_mean_score_dense(model, X, chain + [t.id], toolkit, seed, (step,), masks)
            if s < best_score:
                best_score, best_id = s, t.id
        chain.append(best_id)
        trace.append(best_score)
    return TransformationChain(tuple(chain), max(max_len, len(chain))), trace


@dataclass(frozen=True)
class RandomChainReport:
    """Per-chain, per-prefix-length evasion for uniformly sampled chains."""

    chains: tuple
    uer_matrix: np.ndarray  # (n_chains, max_len)
    median_per_length: np.ndarray  # (max_len,)


def random_chain_attack(model, toolkit: Toolkit, test_malware: LabeledDataset,
                        n_chains: int = 1000, max_len: int = MAX_CHAIN_LEN,
                        threshold=0.5, rng=0) -> RandomChainReport:
    """Sample chains uniformly (with replacement) and report UER at every prefix length.

    Corrupted and parse-error rows count as non-evasive from the aborting
    step onward.  Deterministic given the seed.
    """
    _require_malware(test_malware)
    if len(toolkit) == 0:
        raise ValueError("toolkit is empty")
    if n_chains < 1:
        raise ValueError("n_chains must be at least 1")
    thr = as_threshold(threshold)
    seed = _normalize_seed(rng)
    X = test_malware.dense_matrix()
    n = X.shape[0]
    ids = np.array(toolkit.ids)
    masks = _mask_matrix(toolkit) if toolkit.all_deterministic() else None
    uer = np.zeros((n_chains, max_len), dtype=np.float64)
    chains = []
    effects = _effect_map(toolkit)
    pick_rng = _seed_rng(seed, 0)
    chain_ids = pick_rng.choice(ids, size=(n_chains, max_len), replace=True)
    for ci in range(n_chains):
        cids = [int(t) for t in chain_ids[ci]]
        chains.append(TransformationChain(tuple(cids), max_len))
        if masks is not None:
            Xt = X.copy()
            for step, tid in enumerate(cids):
                np.maximum(Xt, masks[tid], out=Xt)
                uer[ci, step] = np.mean(model.score_matrix(Xt) < thr.c)
        else:
            # surviving rows evolve in place and are scored in one batch per step
            alive = np.ones(n, dtype=bool)
            rngs = [_seed_rng(seed, 1, ci, i) for i in range(n)]
            cur = X.copy()
            for step, tid in enumerate(cids):
                for i in range(n):
                    if alive[i]:
                        if _apply_effect_dense(cur[i], effects[tid], rngs[i]) != TRANSFORMED:
                            alive[i] = False
                if alive.any():
                    evasive = model.score_matrix(cur[alive]) < thr.c
                    uer[ci, step] = float(np.sum(evasive)) / n
    return RandomChainReport(tuple(chains), uer, np.median(uer, axis=0))


@dataclass(frozen=True)
class GpSearchResult:
    best_chain: TransformationChain
    best_fitness: float
    fitness_trace: tuple  # best fitness per generation
    max_run_length: int  # longest run of one id inside the best chain
    n_evaluations: int


def _max_run_length(ids) -> int:
    best, run = 0, 0
    prev = None
    for t in ids:
        run = run + 1 if t == prev else 1
        best = max(best, run)
        prev = t
    return best


def gp_uap_search(model, toolkit: Toolkit, exploration_malware: LabeledDataset,
                  population: int = 20, generations: int = 30,
                  mutation_rate: float = 0.1, crossover_rate: float = 0.6,
                  max_len: int = MAX_CHAIN_LEN, rng=0) -> GpSearchResult:
    """Genetic search over chains: tournament selection of size 2, one-point
    crossover, per-gene mutation, elitism of one.  Fitness is the mean
    malware score with corrupted/parse-error outcomes scoring 1.0 (lower is
    better).  Genomes are chains of length 1..max_len; fitness streams derive
    from the genome itself, so identical genomes always score identically.
    """
    _require_malware(exploration_malware)
    if len(toolkit) == 0:
        raise ValueError("toolkit is empty")
    if population < 2:
        raise ValueError("population must be at least 2")
    if generations < 1:
        raise ValueError("generations must be at least 1")
    seed = _normalize_seed(rng)
    X = exploration_malware.dense_matrix()
    ids = list(toolkit.ids)
    masks = _mask_matrix(toolkit) if toolkit.all_deterministic() else None
    gp_rng = _seed_rng(seed, 0)
    cache: dict[tuple, float] = {}
    n_evaluations = 0

    def fitness(genome: tuple) -> float:
        nonlocal n_evaluations
        if genome not in cache:
            key = (1, len(genome)) + genome  # genome-derived streams: equal genomes, equal fitness
            cache[genome] = _chain_mean_score_dense(model, X, list(genome), toolkit, seed, key, masks)
            n_evaluations += len(X) * len(genome)
        return cache[genome]

    def random_genome() -> tuple:
        length = int(gp_rng.integers(1, max_len + 1))
        return tuple(int(ids[k]) for k in gp_rng.integers(0, len(ids), size=length))

    def tournament(pop, fits) -> tuple:
        a, b = gp_rng.integers(0, len(pop), size=2)
        return pop[a] if fits[a] <= fits[b] else pop[b]

    pop = [random_genome() for _ in range(population)]
    trace = []
    for _ in range(generations):
        fits = [fitness(g) for g in pop]
        best_i = int(np.argmin(fits))
        trace.append(fits[best_i])
        next_pop = [pop[best_i]]  # elitism of one
        while len(next_pop) < population:
            p1 = tournament(pop, fits)
            if gp_rng.random() < crossover_rate:
                p2 = tournament(pop, fits)
                ca = int(gp_rng.integers(1, len(p1) + 1))
                cb = int(gp_rng.integers(0, len(p2) + 1))
                child = (p1[:ca] + p2[cb:])[:max_len]
            else:
                child = p1
            if mutation_rate > 0.0:
                child = tuple(
                    int(ids[gp_rng.integers(0, len(ids))]) if gp_rng.random() < mutation_rate else t
                    for t in child
                )
            next_pop.append(child)
        pop = next_pop
    fits = [fitness(g) for g in pop]
    best_i = int(np.argmin(fits))
    best = pop[best_i]
    trace.append(fits[best_i])
    return GpSearchResult(
        TransformationChain(best, max(max_len, len(best))),
        fits[best_i],
        tuple(trace),
        _max_run_length(best),
        n_evaluations,
    )


def search_rounds_estimate(n_exploration: int, max_chain_len: int, n_transformations: int) -> int:
    """Budget of candidate evaluations for the greedy searches: |E| * |chain| * |toolkit|."""
    if min(n_exploration, max_chain_len, n_transformations) < 0:
        raise ValueError("arguments must be non-negative")
    return int(n_exploration) * int(max_chain_len) * int(n_transformations)


# ---------------------------------------------------------------------------
# toolkit builders


def make_gadget_toolkit(model, spec: FeatureSpaceSpec, n_gadgets: int, seed: int = 0,
                        primary_pool_size: int = 40, side_effect_mean: float = 18.0,
                        side_effect_goodware_fraction: float = 0.5) -> Toolkit:
    """Harvest an Android-like toolkit of deterministic gadget masks from a linear model.

    Each gadget centers on one feature drawn from the primary_pool_size most
    goodware-indicative binary features (most negative weights), plus a
    Poisson(side_effect_mean) number of side-effect features.  Side effects
    come from the same goodware pool with probability
    side_effect_goodware_fraction and from the remaining binary features
    otherwise, modelling benign code slices that drag many benign-looking
    features along.
    """
    if n_gadgets < 1:
        raise ValueError("n_gadgets must be at least 1")
    if model.weights.shape[0] != spec.n_features:
        raise ValueError("model and spec disagree on n_features")
    rng = np.random.default_rng(seed)
    binary = spec.binary_indices
    order = binary[np.argsort(model.weights[binary], kind="stable")]
    pool = order[: min(primary_pool_size, len(order))]
    rest = np.setdiff1d(binary, pool)
    gadgets = []
    for gid in range(n_gadgets):
        primary = int(pool[rng.integers(0, len(pool))])
        mask = {primary}
        n_side = int(rng.poisson(side_effect_mean))
        for _ in range(n_side):
            if len(rest) == 0 or rng.random() < side_effect_goodware_fraction:
                mask.add(int(pool[rng.integers(0, len(pool))]))
            else:
                mask.add(int(rest[rng.integers(0, len(rest))]))
        gadgets.append(Transformation(gid, f"gadget_{gid:03d}", DeterministicMask(frozenset(mask))))
    return Toolkit(spec, tuple(gadgets))


def windows_feature_spec() -> FeatureSpaceSpec:
    """Reference 120-feature Windows-like space used by the bundled toolkit.

    Layout: 20 binary import flags (benign-indicative), 6 binary signature
    flags (malware-indicative), 40 continuous section/byte statistics, and
    54 binary header flags as background.
    """
    kinds = [BINARY] * 26 + [CONTINUOUS] * 40 + [BINARY] * 54
    groups = (
        ["api_imports"] * 20
        + ["signature_flags"] * 6
        + ["section_stats"] * 20
        + ["byte_histogram"] * 20
        + ["header_flags"] * 54
    )
    return FeatureSpaceSpec(120, tuple(kinds), tuple(groups))


def make_windows_toolkit() -> Toolkit:
    """Ten stochastic transformations mimicking binary-rewriting tools.

    Indices refer to windows_feature_spec(): imports 0..19, signature flags
    20..25, section stats 26..45, byte histogram 46..65, header flags 66..119.
    """
    spec = windows_feature_spec()

    def entries(items):
        return tuple(EffectEntry(*it) for it in items)

    def imports(idx, p):
        return [(i, p, SET_TO_ONE) for i in idx]

    def shift(idx, p, lo, hi):
        return [(i, p, ADD_UNIFORM, lo, hi) for i in idx]

    def reset(idx, p, lo, hi):
        return [(i, p, SET_UNIFORM, lo, hi) for i in idx]

    ts = [
        Transformation(0, "Append overlay", StochasticEffect(
            entries(shift(range(46, 58), 0.8, -0.15, 0.0)), 0.01, 0.0)),
        Transformation(1, "Append imports", StochasticEffect(
            entries(imports(range(0, 12), 0.9)), 0.02, 0.0)),
        Transformation(2, "Rename section", StochasticEffect(
            entries(imports(range(70, 76), 0.6) + shift(range(26, 30), 0.5, -0.1, 0.05)), 0.02, 0.0)),
        Transformation(3, "Add section", StochasticEffect(
            entries(imports(range(76, 84), 0.7) + shift(range(30, 36), 0.6, -0.2, 0.0)), 0.30, 0.0)),
        Transformation(4, "Append section", StochasticEffect(
            entries(imports(range(84, 90), 0.7) + shift(range(36, 42), 0.7, -0.25, 0.0)), 0.05, 0.0)),
        Transformation(5, "Remove signature", StochasticEffect(
            entries(imports([90, 91], 0.9) + shift(range(58, 62), 0.6, -0.2, 0.0)), 0.01, 0.0)),
        Transformation(6, "Remove debug", StochasticEffect(
            entries(imports([92, 93], 0.9) + shift(range(42, 46), 0.7, -0.3, 0.0)), 0.01, 0.0)),
        Transformation(7, "UPX pack", StochasticEffect(
            entries(imports(range(12, 20), 0.85) + reset(range(26, 46), 0.75, 0.0, 0.45)
                    + reset(range(46, 66), 0.5, 0.05, 0.5)), 0.08, 0.008)),
        Transformation(8, "UPX unpack", StochasticEffect(
            entries(imports([94, 95], 0.3) + shift(range(62, 66), 0.3, -0.05, 0.05)), 0.05, 0.0)),
        Transformation(9, "Break optional header", StochasticEffect(
            entries(imports(range(96, 104), 0.8)), 0.15, 0.01)),
    ]
    return Toolkit(spec, tuple(ts))


def load_bundled_windows_toolkit() -> Toolkit:
    """Parse the toolkit file shipped inside the package."""
    ref = resources.files("uapkit").joinpath("data/windows_toolkit_v1.toolkit")
    with resources.as_file(ref) as path:
        return load_toolkit(path, windows_feature_spec())


# ---------------------------------------------------------------------------
# toolkit text format


def save_toolkit(toolkit: Toolkit, path) -> None:
    """Write the line-based toolkit format.

    ``toolkit v1`` header, then per transformation either::

        transform <id> "<name>" mask
        mask <i1> <i2> ...

    or::

        transform <id> "<name>" stochastic <corruption_p> <parse_error_p>
        effect <feature_index> <p_modify> set_to_one
        effect <feature_index> <p_modify> add_uniform <lo> <hi>
        effect <feature_index> <p_modify> set_uniform <lo> <hi>
    """
    lines = ["toolkit v1"]
    for t in toolkit.transformations:
        if '"' in t.name:
            raise ValueError("transformation names may not contain double quotes")
        if isinstance(t.effect, DeterministicMask):
            lines.append(f'transform {t.id} "{t.name}" mask')
            lines.append("mask " + " ".join(str(i) for i in sorted(t.effect.set_features)))
        else:
            lines.append(
                f'transform {t.id} "{t.name}" stochastic '
                f"{t.effect.corruption_probability!r} {t.effect.parse_error_probability!r}"
            )
            for e in t.effect.entries:
                if e.sampler == SET_TO_ONE:
                    lines.append(f"effect {e.feature} {e.probability!r} set_to_one")
                else:
                    lines.append(f"effect {e.feature} {e.probability!r} {e.sampler} {e.lo!r} {e.hi!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines))
        f.write("\n")


def load_toolkit(path, spec: FeatureSpaceSpec) -> Toolkit:
    """Parse the toolkit format; errors name the offending 1-based line."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or lines[0].strip() != "toolkit v1":
        raise ValueError("not a toolkit file or unsupported version (expected 'toolkit v1')")
    transformations = []
    current = None  # (id, name, kind, corruption, parse_error, items)

    def flush():
        if current is None:
            return
        tid, name, kind, pc, pp, items = current
        if kind == "mask":
            effect = DeterministicMask(frozenset(items))
        else:
            effect = StochasticEffect(tuple(items), pc, pp)
        transformations.append(Transformation(tid, name, effect))

    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("transform "):
            flush()
            try:
                head, rest = line.split('"', 1)
                name, tail = rest.split('"', 1)
                tid = int(head.split()[1])
                tail = tail.split()
            except (ValueError, IndexError):
                raise ValueError(f"line {lineno}: malformed transform header") from None
            if tail[0] == "mask":
                current = (tid, name, "mask", 0.0, 0.0, set())
            elif tail[0] == "stochastic" and len(tail) == 3:
                current = (tid, name, "stochastic", float(tail[1]), float(tail[2]), [])
            else:
                raise ValueError(f"line {lineno}: malformed transform header")
        elif line.startswith("mask "):
            if current is None or current[2] != "mask":
                raise ValueError(f"line {lineno}: mask line outside a mask transform")
            feats = [int(t) for t in line.split()[1:]]
            for f in feats:
                if not 0 <= f < spec.n_features:
                    raise ValueError(f"line {lineno}: mask index {f} out of range")
            current[5].update(feats)
        elif line.startswith("effect "):
            if current is None or current[2] != "stochastic":
                raise ValueError(f"line {lineno}: effect line outside a stochastic transform")
            parts = line.split()
            try:
                feat, p, sampler = int(parts[1]), float(parts[2]), parts[3]
                if sampler == SET_TO_ONE:
                    entry = EffectEntry(feat, p, sampler)
                else:
                    entry = EffectEntry(feat, p, sampler, float(parts[4]), float(parts[5]))
            except (ValueError, IndexError):
                raise ValueError(f"line {lineno}: malformed effect line") from None
            if not 0 <= feat < spec.n_features:
                raise ValueError(f"line {lineno}: effect index {feat} out of range")
            current[5].append(entry)
        else:
            raise ValueError(f"line {lineno}: unrecognized line {line!r}")
    flush()
    return Toolkit(spec, tuple(transformations))


def save_chain(chain: TransformationChain, path) -> None:
    """Write the one-line chain format: ``chain v1: t1,t2,...``."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("chain v1: " + ",".join(str(i) for i in chain.ids) + "\n")


def load_chain(path, max_len: int = MAX_CHAIN_LEN) -> TransformationChain:
    with open(path, "r", encoding="utf-8") as f:
        line = f.readline().strip()
    if not line.startswith("chain v1:"):
        raise ValueError("not a chain file or unsupported version (expected 'chain v1:')")
    body = line[len("chain v1:"):].strip()
    ids = tuple(int(t) for t in body.split(",")) if body else ()
    return TransformationChain(ids, max(max_len, len(ids)))
