from __future__ import annotations

import itertools

import numpy as np
import pytest

from uapkit.attacks import (
    AttackBudget,
    UapVector,
    apply_uap,
    craft_uap_avg_jacobian,
    craft_uap_linear,
    input_specific_attack,
    load_uap,
    save_uap,
    transfer_eval,
)
from uapkit.data import l0_distance
from uapkit.models import TrainConfig, input_gradient, train_mlp

from conftest import binary_spec, lr, malware_set, mixed_spec, random_binary_malware, vec


# ---------------------------------------------------------------------------
# budgets and UAP vectors


def test_budget_validation():
    assert AttackBudget(1).l0_max == 1
    with pytest.raises(ValueError):
        AttackBudget(0)
    with pytest.raises(ValueError):
        AttackBudget(5, add_only=False)  # removing features is out of scope


def test_uap_vector_validation():
    spec = binary_spec(4)
    assert UapVector(spec, (2, 0)).indices == (2, 0)  # crafting order preserved
    with pytest.raises(ValueError):
        UapVector(spec, (1, 1))
    with pytest.raises(ValueError):
        UapVector(spec, (9,))
    mspec = mixed_spec(2, 2)
    with pytest.raises(ValueError):
        UapVector(mspec, (3,))  # continuous features cannot be UAP flips


def test_apply_uap_examples():
    spec = binary_spec(4)
    uap = UapVector(spec, (0, 2))
    out = apply_uap(vec(spec, {}), uap)
    assert out.values == {0: 1.0, 2: 1.0}
    unchanged = apply_uap(vec(spec, {1: 1}), UapVector(spec, (1,)))
    assert unchanged.values == {1: 1.0}
    once = apply_uap(vec(spec, {3: 1}), uap)
    twice = apply_uap(once, uap)
    assert once.values == twice.values


# ---------------------------------------------------------------------------
# input-specific attack


def test_input_specific_first_flip_oracle():
    # w=[-3,-1,2], x={2:1}: flipping 0 gives score 0.269, flipping 1 gives
    # 0.731 (brute force over both candidates) -> feature 0
    spec = binary_spec(3)
    model = lr([-3.0, -1.0, 2.0])
    out = input_specific_attack(model, vec(spec, {2: 1}), AttackBudget(1))
    assert out.values == {0: 1.0, 2: 1.0}


def test_input_specific_benign_input_unchanged():
    spec = binary_spec(3)
    model = lr([-3.0, -1.0, 2.0])
    x = vec(spec, {1: 1})  # margin -1, already benign
    assert input_specific_attack(model, x, AttackBudget(2)).values == x.values


def test_input_specific_no_candidates():
    spec = binary_spec(2)
    model = lr([2.0, 2.0])
    with pytest.raises(ValueError, match="no zero-valued binary features"):
        input_specific_attack(model, vec(spec, {0: 1, 1: 1}), AttackBudget(1))


def test_input_specific_stops_when_no_negative_gradient():
    spec = binary_spec(3)
    model = lr([1.0, 2.0, 3.0])  # all flips raise the score
    x = vec(spec, {0: 1})
    out = input_specific_attack(model, x, AttackBudget(3), threshold=1e-9)
    assert out.values == x.values


def test_input_specific_add_only_and_budget():
    rng = np.random.default_rng(17)
    spec = binary_spec(15)
    for trial in range(30):
        model = lr(rng.normal(size=15), float(rng.normal()))
        x = vec(spec, {i: 1 for i in np.nonzero(rng.random(15) < 0.3)[0]})
        budget = AttackBudget(int(rng.integers(1, 6)))
        out = input_specific_attack(model, x, budget)
        for i, v in x.values.items():
            assert out.values.get(i, 0.0) >= v  # add-only
        assert l0_distance(x, out) <= budget.l0_max


def test_input_specific_dominates_uap_at_equal_budget():
    # per example: either the adaptive attack already evades (it stops at the
    # benign boundary), or it spent the full budget on the best available
    # flips and its score is <= the universal set's score.  Either way the
    # evasion rate dominates the UAP's at equal budget.
    rng = np.random.default_rng(23)
    spec = binary_spec(12)
    for trial in range(20):
        w = rng.normal(size=12) - 0.4
        model = lr(w, 0.5)
        mal = random_binary_malware(spec, 25, 0.25, seed=trial)
        budget = AttackBudget(4)
        uap = craft_uap_linear(model, spec, budget)
        n_spec = n_uap = 0
        for x in mal.examples:
            s_specific = model.score_matrix(
                input_specific_attack(model, x, budget).to_dense()[None])[0]
            s_uap = model.score_matrix(apply_uap(x, uap).to_dense()[None])[0]
            assert s_specific < 0.5 or s_specific <= s_uap + 1e-12
            n_spec += s_specific < 0.5
            n_uap += s_uap < 0.5
        assert n_spec >= n_uap


# ---------------------------------------------------------------------------
# UAP crafting


def test_linear_uap_brute_force_oracle():
    # w=[-2,1,-1,.5], l0=2: {0,2} maximizes mean margin drop over all C(4,2)
    # subsets (verified by enumeration)
    spec = binary_spec(4)
    model = lr([-2.0, 1.0, -1.0, 0.5])
    uap = craft_uap_linear(model, spec, AttackBudget(2))
    assert set(uap.indices) == {0, 2}
    assert uap.indices == (0, 2)  # most negative weight ranks first


def test_linear_uap_all_positive_weights():
    spec = binary_spec(3)
    uap = craft_uap_linear(lr([3.0, 1.0, 2.0]), spec, AttackBudget(1))
    assert uap.indices == (1,)  # least positive weight


def test_linear_uap_tie_break():
    spec = binary_spec(2)
    uap = craft_uap_linear(lr([-1.0, -1.0]), spec, AttackBudget(1))
    assert uap.indices == (0,)


def test_avg_jacobian_equals_linear_ranking_on_lr():
    # gradient is proportional to w for every x, so averaging preserves order
    rng = np.random.default_rng(31)
    spec = binary_spec(20)
    for trial in range(10):
        model = lr(rng.normal(size=20), float(rng.normal() * 0.1))
        mal = random_binary_malware(spec, 40, 0.2, seed=100 + trial)
        a = craft_uap_avg_jacobian(model, mal, AttackBudget(6))
        b = craft_uap_linear(model, spec, AttackBudget(6))
        assert a.indices == b.indices


def test_avg_jacobian_single_example_matches_saliency():
    spec = binary_spec(10)
    ds = random_binary_malware(spec, 60, 0.3, seed=5)
    model = train_mlp(ds, TrainConfig(epochs=2, seed=0), (10, 12, 1))
    single = malware_set(spec, [dict(ds.examples[0].values)])
    uap = craft_uap_avg_jacobian(model, single, AttackBudget(3))
    g = input_gradient(model, ds.examples[0])
    order = sorted(range(10), key=lambda i: (g[i], i))
    assert list(uap.indices) == order[:3]


def test_linear_uap_margin_arithmetic():
    # for any x with the selected features at 0, the margin drops by exactly
    # the sum of the selected (negative) weights
    rng = np.random.default_rng(41)
    spec = binary_spec(10)
    w = rng.normal(size=10) - 1.0
    model = lr(w, 0.3)
    uap = craft_uap_linear(model, spec, AttackBudget(4))
    spare = next(i for i in range(10) if i not in uap.indices)
    x = vec(spec, {spare: 1})
    xd, ud = x.to_dense(), apply_uap(x, uap).to_dense()
    margin = lambda v: float(v @ w + 0.3)
    assert margin(ud) - margin(xd) == pytest.approx(sum(w[i] for i in uap.indices), abs=1e-12)


# ---------------------------------------------------------------------------
# transfer evaluation


def test_transfer_self_equals_white_box():
    spec = binary_spec(12)
    rng = np.random.default_rng(51)
    model = lr(rng.normal(size=12) - 0.6, 1.0)
    mal = random_binary_malware(spec, 50, 0.25, seed=3)
    budget = AttackBudget(5)
    uap = craft_uap_linear(model, spec, budget)
    rep = transfer_eval(uap, model, mal, 0.5)
    assert rep.per_length_uer is not None and len(rep.per_length_uer) == 5
    assert rep.uer == rep.per_length_uer[-1]
    assert rep.n_evasive <= rep.n_total


def test_transfer_empty_set_error():
    spec = binary_spec(4)
    model = lr([-1.0] * 4)
    empty = malware_set(spec, [])
    with pytest.raises(ValueError, match="empty evaluation set"):
        transfer_eval(UapVector(spec, (0,)), model, empty, 0.5)


def test_transfer_curve_monotone_for_negative_weights():
    spec = binary_spec(10)
    w = -np.linspace(2.0, 0.5, 10)
    model = lr(w, 2.5)
    mal = random_binary_malware(spec, 80, 0.15, seed=9)
    uap = craft_uap_linear(model, spec, AttackBudget(8))
    rep = transfer_eval(uap, model, mal, 0.5)
    trace = rep.per_length_uer
    assert all(a <= b + 1e-12 for a, b in zip(trace, trace[1:]))


# ---------------------------------------------------------------------------
# serialization


def test_uap_file_round_trip(tmp_path):
    spec = binary_spec(30)
    uap = UapVector(spec, (7, 3, 19))
    p = tmp_path / "u.uap"
    save_uap(uap, p)
    assert p.read_text(encoding="utf-8") == "uap v1: 3,7,19\n"  # sorted on disk
    loaded = load_uap(p, spec)
    assert set(loaded.indices) == {3, 7, 19}


def test_uap_load_rejects_garbage(tmp_path):
    p = tmp_path / "u.uap"
    p.write_text("uap v2: 1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_uap(p, binary_spec(4))
