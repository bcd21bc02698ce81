"""
Stochastic rewriting tools against a tree ensemble
==================================================

The bundled toolkit models ten binary-rewriting operations (packing,
section edits, overlay appends...) over a 120-feature space of import
flags, section statistics, byte-histogram buckets and header flags.
Every operation is stochastic: it touches each of its features only with
some probability, and can corrupt the binary outright.  Tree ensembles
offer no gradients, so the search goes by the model's own confidence.
"""

import numpy as np

from uapkit.data import SplitPlan, SyntheticDatasetConfig, make_split, synthesize_dataset
from uapkit.metrics import auc_roc, delta_variation, uer
from uapkit.models import predict_scores, train_gbdt
from uapkit.problem_space import (
    TransformationChain,
    greedy_uap_search_confidence,
    load_bundled_windows_toolkit,
    windows_feature_spec,
)

toolkit = load_bundled_windows_toolkit()
spec = windows_feature_spec()
print(f"toolkit: {len(toolkit)} rewriting operations over {spec.n_features} features")
for t in toolkit.transformations:
    eff = t.effect
    print(f"  [{t.id}] {t.name}: {len(eff.entries)} feature entries, "
          f"corruption p={eff.corruption_probability:.3f}")

# Synthetic PE-like data over the same layout: 20 benign-indicative import
# flags, 6 malware-indicative signature flags, 40 continuous statistics,
# 54 background header flags.
cfg = SyntheticDatasetConfig(
    n_features=120, n_benign=1500, n_malware=1500,
    n_goodware_indicative=20, n_malware_indicative=6,
    p_on_in_own_class=0.75, p_on_in_other_class=0.05,
    n_continuous=40, p_background=0.3, seed=11,
)
ds = synthesize_dataset(cfg, spec=spec)
train, exploration, test = make_split(ds, SplitPlan(0.6, 0.2, 0.2, seed=11))

model = train_gbdt(train, n_trees=20, max_leaves=31)
print(f"\nGBDT: 20 trees, clean test AUC "
      f"{auc_roc(predict_scores(model, test.examples), test.labels):.4f}")

test_mal = test.malware_only()
tp = test_mal.subset(np.flatnonzero(predict_scores(model, test_mal.examples) >= 0.5))
expl = exploration.malware_only()
expl = expl.subset(range(min(100, len(expl))))

# Greedy descent on the mean malware score.  Corrupted realizations score
# 1.0, so the search learns to avoid fragile operations on its own.
chain, score_trace = greedy_uap_search_confidence(model, toolkit, expl, max_len=6, rng=0)
names = [toolkit.by_id(i).name for i in chain.ids]
print(f"\nfound chain: {list(chain.ids)}  ({' -> '.join(names)})")
print("mean score after each step: " + ", ".join(f"{s:.3f}" for s in score_trace))

# Held-out evaluation.  The chain is stochastic, so average over ten
# Monte-Carlo realizations; corrupted draws count against the attacker.
# Confidence search always extends to max_len, and here the score trace
# shows the last extensions backfiring: each extra operation stacks more
# corruption risk, so held-out UER saturates at the length-4 prefix.
print("\nheld-out UER by prefix (10 realizations each):")
for k in range(1, len(chain.ids) + 1):
    rep = uer(model, tp, TransformationChain(chain.ids[:k], chain.max_len),
              toolkit=toolkit, rng=7, mc_reps=10)
    print(f"  len {k}: UER {rep.uer:.3f}   corrupted {rep.n_corrupted}/{rep.n_total}")

# What does the chain physically change?  Feature deltas over surviving
# realizations of the full chain.
dv = delta_variation(tp, chain, toolkit, rng=3)
top = np.argsort(dv.per_feature_mean_abs_change)[::-1][:5]
print(f"\nsurviving realizations: {dv.n_surviving}/{len(tp)}")
print(f"mean fraction of features modified: {dv.mean_fraction_modified:.3f}")
print("largest mean |delta| by feature: "
      + ", ".join(f"{i} ({spec.feature_groups[i]}) {dv.per_feature_mean_abs_change[i]:.3f}"
                  for i in top))
