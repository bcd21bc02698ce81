"""
Hardening trees with a perturbation statistics model
====================================================

Tree ensembles cannot be adversarially trained by gradient descent, but
they can be retrained.  We let the attacker find a chain against the
undefended ensemble, record what that chain statistically does to feature
vectors, and retrain from scratch with a sampled "twin" of every malware
row drawn from those statistics.
"""

import numpy as np

from uapkit.data import SplitPlan, SyntheticDatasetConfig, make_split, synthesize_dataset
from uapkit.defenses import (
    adv_train_gbdt_with_stat_model,
    fit_perturbation_stat_model,
    sample_perturbation,
)
from uapkit.metrics import auc_roc
from uapkit.models import TrainConfig, predict_scores, train_gbdt, train_logistic_regression
from uapkit.problem_space import apply_chain, greedy_uap_search_confidence, make_gadget_toolkit

cfg = SyntheticDatasetConfig(
    n_features=400, n_benign=2000, n_malware=2000,
    n_goodware_indicative=40, n_malware_indicative=0,
    p_on_in_own_class=0.8, p_on_in_other_class=0.02,
    p_background=0.2, seed=5,
)
ds = synthesize_dataset(cfg)
train, exploration, test = make_split(ds, SplitPlan(0.6, 0.2, 0.2, seed=5))
expl_mal = exploration.malware_only()
test_mal = test.malware_only()

ranker = train_logistic_regression(train, TrainConfig(epochs=10, learning_rate=0.05, batch_size=256, seed=1))
toolkit = make_gadget_toolkit(ranker, ds.spec, n_gadgets=40, seed=1)

undefended = train_gbdt(train, n_trees=20, max_leaves=31)
print(f"undefended GBDT clean AUC: "
      f"{auc_roc(predict_scores(undefended, test.examples), test.labels):.4f}")

# Attacker's move: a confidence-guided chain against the undefended trees.
chain, _ = greedy_uap_search_confidence(undefended, toolkit,
                                        expl_mal.subset(range(100)), max_len=10, rng=2)
print(f"attack chain: {list(chain.ids)}")

# Defender's record: apply that chain to 100 exploration malware rows and
# fit per-feature set-to-one frequencies from the surviving outcomes.
clean = [expl_mal.examples[k] for k in range(100)]
outcomes = [apply_chain(x, chain, toolkit, np.random.default_rng(500 + k))
            for k, x in enumerate(clean)]
stat = fit_perturbation_stat_model(clean, outcomes)
active = [s for s in stat.stats if s.probability > 0]
print(f"stat model: {len(active)} features ever touched; top frequencies "
      + ", ".join(f"{s.feature}:{s.probability:.2f}"
                  for s in sorted(active, key=lambda s: -s.probability)[:5]))

# Retrain from scratch, pairing every malware row with one sampled twin.
defended = adv_train_gbdt_with_stat_model(train, stat, mix="mixed", seed=0,
                                          n_trees=20, max_leaves=31)

# Score the defense on twins of unseen malware: of the perturbed rows that
# fooled the undefended ensemble, how many does the retrained one catch?
twins = [sample_perturbation(stat, x, np.random.default_rng(900 + k))
         for k, x in enumerate(test_mal.examples)]
evaded = predict_scores(undefended, twins) < 0.5
caught = predict_scores(defended, [twins[i] for i in np.flatnonzero(evaded)]) >= 0.5
print(f"\ntwins evading the undefended ensemble: {int(evaded.sum())}/{len(twins)}")
print(f"of those, caught after retraining:      {int(caught.sum())}/{int(evaded.sum())} "
      f"({caught.mean():.1%})")

auc_dfd = auc_roc(predict_scores(defended, test.examples), test.labels)
print(f"defended clean AUC: {auc_dfd:.4f} (clean accuracy is the price to watch)")
