"""
Feature-space universal perturbations
=====================================

One add-only perturbation, crafted once, that pushes most malware across
the decision boundary of a trained detector.  We plant goodware-indicative
features in a synthetic dataset, train a linear model and an MLP, and
compare the universal attack against a per-input attack at equal L0 cost.
"""

import numpy as np

from uapkit.attacks import (
    AttackBudget,
    craft_uap_avg_jacobian,
    craft_uap_linear,
    input_specific_attack,
    transfer_eval,
)
from uapkit.data import SplitPlan, SyntheticDatasetConfig, make_split, synthesize_dataset
from uapkit.metrics import auc_roc
from uapkit.models import (
    TrainConfig,
    predict_scores,
    small_layer_sizes,
    train_logistic_regression,
    train_mlp,
)

# A 300-feature space where 30 binary features fire mostly in benign
# software.  Those are the handholds a universal perturbation can grab:
# adding them to malware makes it look benign without breaking anything.
cfg = SyntheticDatasetConfig(
    n_features=300, n_benign=1500, n_malware=1500,
    n_goodware_indicative=30, n_malware_indicative=0,
    p_on_in_own_class=0.8, p_on_in_other_class=0.02,
    p_background=0.2, seed=42,
)
ds = synthesize_dataset(cfg)
train, exploration, test = make_split(ds, SplitPlan(0.6, 0.2, 0.2, seed=42))
print(f"dataset: {len(ds)} rows, {ds.spec.n_features} features")
print(f"split:   {len(train)} train / {len(exploration)} exploration / {len(test)} test")

lr = train_logistic_regression(train, TrainConfig(epochs=30, learning_rate=0.05, batch_size=256, seed=0))
mlp = train_mlp(train, TrainConfig(epochs=6, learning_rate=1e-3, batch_size=256, seed=0),
                small_layer_sizes(cfg.n_features))

scores = predict_scores(lr, test.examples)
print(f"\nclean test AUC: lr {auc_roc(scores, test.labels):.4f}, "
      f"mlp {auc_roc(predict_scores(mlp, test.examples), test.labels):.4f}")

# Keep only malware the model actually catches; evading a row the model
# already misses is not an attack.
test_mal = test.malware_only()
tp_lr = test_mal.subset(np.flatnonzero(predict_scores(lr, test_mal.examples) >= 0.5))
tp_mlp = test_mal.subset(np.flatnonzero(predict_scores(mlp, test_mal.examples) >= 0.5))
print(f"true positives: lr {len(tp_lr)}/{len(test_mal)}, mlp {len(tp_mlp)}/{len(test_mal)}")

expl_mal = exploration.malware_only()
budget = AttackBudget(20)

# For a linear model the best add-only flips are just the most negative
# weights; for the MLP we average input gradients over exploration malware.
uap_lr = craft_uap_linear(lr, ds.spec, budget)
uap_mlp = craft_uap_avg_jacobian(mlp, expl_mal, budget)

picked = [ds.spec.feature_groups[i] for i in uap_lr.indices]
n_planted = sum(1 for g in picked if g == "goodware_indicative")
print(f"\nlinear UAP sets {len(uap_lr)} features; "
      f"{n_planted}/{len(uap_lr)} are planted goodware-indicative ones")

print("\nUER of one universal perturbation on unseen true positives (L0=20):")
for name, uap, model, tps in [("lr", uap_lr, lr, tp_lr), ("mlp", uap_mlp, mlp, tp_mlp)]:
    rep = transfer_eval(uap, model, tps, 0.5)
    print(f"  {name:3s}: {rep.uer:.3f}  ({rep.n_evasive}/{rep.n_total} evade)")

# How much budget does the attack actually need?  Sweep L0 against lr.
print("\nlr UER by budget: ", end="")
print(", ".join(
    f"L0={b} -> {transfer_eval(craft_uap_linear(lr, ds.spec, AttackBudget(b)), lr, tp_lr, 0.5).uer:.3f}"
    for b in (2, 5, 10, 20)
))

# Per-input attack at the same budget: recompute the best flips per sample.
# The universal vector gives up surprisingly little for being input-agnostic.
hits = sum(
    predict_scores(lr, [input_specific_attack(lr, x, budget)])[0] < 0.5
    for x in tp_lr.examples
)
print(f"\ninput-specific attack on lr: {hits}/{len(tp_lr)} evade "
      f"({hits / len(tp_lr):.3f} vs universal {transfer_eval(uap_lr, lr, tp_lr, 0.5).uer:.3f})")

# Transfer: a perturbation crafted against one architecture applied to the
# other.  Both models lean on the same planted features, so it carries over.
print("\ncross-model transfer at L0=20:")
print(f"  lr-crafted  vs mlp: {transfer_eval(uap_lr, mlp, tp_mlp, 0.5).uer:.3f}")
print(f"  mlp-crafted vs lr:  {transfer_eval(uap_mlp, lr, tp_lr, 0.5).uer:.3f}")
