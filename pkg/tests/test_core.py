import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from billboard_regret.core import (
    EXACT,
    EXCESSIVE,
    UNSATISFIED,
    Advertiser,
    Allocation,
    IncrementalInfluence,
    InfluenceModel,
    influence,
    marginal_regret_ratio,
    regret,
    regret_values,
    total_regret,
)
from billboard_regret.errors import ConfigError, InputDomainError

from conftest import disjoint_model, models
from reference import naive_influence, naive_regret


# ---------------------------------------------------------------- model


def test_model_rejects_bad_probability():
    with pytest.raises(InputDomainError):
        InfluenceModel.from_entries([[(0, 0.0)]], 1)
    with pytest.raises(InputDomainError):
        InfluenceModel.from_entries([[(0, 1.5)]], 1)


def test_model_rejects_duplicate_trajectory():
    with pytest.raises(InputDomainError):
        InfluenceModel.from_entries([[(0, 0.5), (0, 0.4)]], 2)


def test_model_rejects_out_of_range_trajectory():
    with pytest.raises(InputDomainError):
        InfluenceModel.from_entries([[(3, 0.5)]], 2)


def test_empty_slot_rows_allowed():
    m = InfluenceModel.from_entries([[], [(0, 0.5)], []], 1)
    assert m.slot_count == 3
    assert list(m.entry_counts()) == [0, 1, 0]
    assert list(m.individual_influence) == [0.0, 0.5, 0.0]


def test_arrays_are_read_only():
    m = InfluenceModel.from_entries([[(0, 0.5)]], 1)
    with pytest.raises(ValueError):
        m.probs[0] = 0.2


def test_select_and_compact_preserve_influence():
    m = InfluenceModel.from_entries([[(0, 0.5), (7, 0.2)], [(7, 1.0)], [(3, 0.9)]], 9)
    sub = m.select([2, 0])
    assert sub.slot_count == 2
    assert influence(sub, [0, 1]) == influence(m, [0, 2])
    c = m.compact()
    assert c.trajectory_count == 3
    assert influence(c, [0, 1, 2]) == influence(m, [0, 1, 2])


# ---------------------------------------------------------------- influence


def test_influence_empty_set_is_zero():
    # [TRIVIAL] empty product, empty sum
    m = InfluenceModel.from_entries([[(0, 0.5)]], 1)
    assert influence(m, []) == 0.0


def test_influence_shared_trajectory_half_half():
    # [DERIVED] 1 - 0.5 * 0.5
    m = InfluenceModel.from_entries([[(0, 0.5)], [(0, 0.5)]], 1)
    assert influence(m, [0, 1]) == pytest.approx(0.75, abs=1e-15)


def test_influence_disjoint_certain_slots_add():
    # [DERIVED] b1 covers 4, b3 covers 5 disjointly at Pr = 1
    m = disjoint_model((4, 6, 5))
    assert influence(m, [0, 2]) == 9.0


def test_influence_invalid_slot_rejected():
    m = disjoint_model((1, 1))
    with pytest.raises(InputDomainError):
        influence(m, [2])
    with pytest.raises(InputDomainError):
        influence(m, [-1])


@settings(max_examples=200, deadline=None)
@given(models(max_slots=7, max_traj=8), st.data())
def test_influence_matches_naive_evaluator(model, data):
    # [DERIVED] independent per-trajectory loop in reference.py
    subset = data.draw(st.sets(st.integers(0, max(model.slot_count - 1, 0)))) if model.slot_count else set()
    assert influence(model, subset) == pytest.approx(naive_influence(model, subset), abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(models(max_slots=7, max_traj=8, min_slots=1), st.data())
def test_influence_monotone_and_bounded(model, data):
    a = data.draw(st.sets(st.integers(0, model.slot_count - 1)))
    extra = data.draw(st.sets(st.integers(0, model.slot_count - 1)))
    ia, iab = influence(model, a), influence(model, a | extra)
    assert ia <= iab + 1e-12
    assert iab <= model.trajectory_count + 1e-12


# ---------------------------------------------------------------- regret


@pytest.mark.parametrize(
    "supplied, expected",
    [
        (10.0, 0.0),    # [TRIVIAL] exact satisfaction
        (6.0, 10.5),    # [DERIVED] 15 * (1 - 0.5 * 0.6)
        (12.0, 3.0),    # [DERIVED] 15 * (12 - 10) / 10
    ],
)
def test_regret_examples(supplied, expected):
    adv = Advertiser(0, 10.0, 15.0)
    assert regret(adv, supplied, 0.5) == pytest.approx(expected, abs=1e-12)


def test_regret_branch_at_equality_is_zero():
    adv = Advertiser(0, 10.0, 15.0)
    for g in (0.0, 0.5, 1.0):
        assert regret(adv, 10.0, g) == 0.0


def test_regret_gamma_out_of_range():
    adv = Advertiser(0, 10.0, 15.0)
    with pytest.raises(ConfigError):
        regret(adv, 1.0, 1.5)
    with pytest.raises(ConfigError):
        regret(adv, 1.0, -0.1)


def test_advertiser_invariants():
    with pytest.raises(InputDomainError):
        Advertiser(0, 0.0, 1.0)
    with pytest.raises(InputDomainError):
        Advertiser(0, 1.0, -1.0)
    assert Advertiser(0, 7.0, 12.0).ratio == pytest.approx(12 / 7)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.1, 50), st.floats(0.1, 50), st.floats(0, 80), st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]))
def test_regret_vectorised_matches_scalar(demand, payment, supplied, gamma):
    adv = Advertiser(0, demand, payment)
    scalar = regret(adv, supplied, gamma)
    assert scalar == float(regret_values(demand, payment, supplied, gamma))
    assert scalar == pytest.approx(naive_regret(demand, payment, supplied, gamma), rel=1e-12, abs=1e-12)
    assert scalar >= 0.0


# ---------------------------------------------------------------- total regret


def test_total_regret_zero_supply_sums_payments():
    m = disjoint_model((2, 3))
    advs = [Advertiser(0, 4.0, 5.0), Advertiser(1, 2.0, 3.0)]
    rep = total_regret(m, Allocation({0: [], 1: []}, [0, 1]), advs, 0.5)
    assert rep.total == 8.0
    assert rep.unsatisfied == 8.0 and rep.excessive == 0.0
    assert rep.satisfied == 0


def test_total_regret_exact_satisfaction_is_zero():
    m = disjoint_model((2, 3))
    advs = [Advertiser(0, 2.0, 5.0), Advertiser(1, 3.0, 3.0)]
    rep = total_regret(m, Allocation({0: [0], 1: [1]}, []), advs, 0.5)
    assert rep.total == 0.0
    assert [e.branch for e in rep.entries] == [EXACT, EXACT]
    assert rep.satisfied == 2


def test_total_regret_worked_example_branches(worked):
    # the hand allotment a1={b4}, a2={b1,b3,b7}, a3={b2,b5,b6,b8,b9}
    model, advs = worked
    alloc = Allocation({0: [3], 1: [0, 2, 6], 2: [1, 4, 5, 7, 8]}, [9])
    rep = total_regret(model, alloc, advs, 0.5).by_id()
    assert rep[0].branch == EXACT
    assert rep[1].branch == EXCESSIVE and rep[2].branch == EXCESSIVE
    assert rep[1].regret == pytest.approx(14 * 3 / 9)
    assert rep[2].regret == pytest.approx(15 * 6 / 10)


def test_total_regret_misaligned():
    m = disjoint_model((2,))
    with pytest.raises(InputDomainError):
        total_regret(m, Allocation({1: [0]}, []), [Advertiser(0, 1.0, 1.0)], 0.5)


@settings(max_examples=100, deadline=None)
@given(models(max_slots=6, max_traj=6, min_slots=1), st.data())
def test_total_regret_decomposition(model, data):
    n = data.draw(st.integers(1, 3))
    advs = [Advertiser(i, data.draw(st.floats(0.2, 5)), data.draw(st.floats(0.2, 5))) for i in range(n)]
    bins = data.draw(st.lists(st.integers(0, n), min_size=model.slot_count, max_size=model.slot_count))
    alloc = Allocation({i: [s for s, b in enumerate(bins) if b == i + 1] for i in range(n)},
                       [s for s, b in enumerate(bins) if b == 0])
    alloc.validate(model.slot_count)
    rep = total_regret(model, alloc, advs, 0.5)
    assert rep.total == pytest.approx(rep.unsatisfied + rep.excessive, abs=0)
    direct = sum(naive_regret(a.demand, a.payment, naive_influence(model, alloc.slots[a.id]), 0.5) for a in advs)
    assert rep.total == pytest.approx(direct, abs=1e-9)
    for e in rep.entries:
        assert (e.branch == UNSATISFIED) == (e.demand > e.supplied)


# ---------------------------------------------------------------- marginal regret


def test_marginal_ratio_over_satisfied_nonpositive():
    m = InfluenceModel.from_entries([[(0, 1.0), (1, 1.0)], [(0, 1.0)]], 2)
    adv = Advertiser(0, 1.0, 4.0)
    assert marginal_regret_ratio(m, [0], 1, adv, 0.5) <= 0.0


def test_marginal_ratio_half():
    # [DERIVED] regret 7 -> 5.5 over individual influence 3
    m = disjoint_model((6, 3))
    adv = Advertiser(0, 10.0, 10.0)
    assert marginal_regret_ratio(m, [0], 1, adv, 0.5) == pytest.approx(0.5)


def test_marginal_ratio_from_empty():
    # [DERIVED] (5 - 0) / 5
    m = disjoint_model((5,))
    assert marginal_regret_ratio(m, [], 0, Advertiser(0, 5.0, 5.0), 1.0) == pytest.approx(1.0)


def test_marginal_ratio_rejects_zero_influence_candidate():
    m = InfluenceModel.from_entries([[(0, 1.0)], []], 1)
    with pytest.raises(InputDomainError):
        marginal_regret_ratio(m, [0], 1, Advertiser(0, 1.0, 1.0), 0.5)


# ---------------------------------------------------------------- incremental


def test_incremental_certain_slot_round_trip():
    m = InfluenceModel.from_entries([[(0, 1.0), (1, 0.5)], [(0, 1.0)], [(1, 0.3)]], 2)
    inc = IncrementalInfluence(m)
    for s in (0, 1, 2):
        inc.add(s)
    assert inc.value == pytest.approx(influence(m, [0, 1, 2]), abs=1e-12)
    inc.remove(0)
    assert inc.value == pytest.approx(influence(m, [1, 2]), abs=1e-12)
    inc.remove(1)
    inc.remove(2)
    assert inc.value == 0.0
    assert np.all(inc.complement() == 1.0)


def test_incremental_rejects_double_add_and_missing_remove():
    m = disjoint_model((1, 1))
    inc = IncrementalInfluence(m, [0])
    with pytest.raises(InputDomainError):
        inc.add(0)
    with pytest.raises(InputDomainError):
        inc.remove(1)


@settings(max_examples=200, deadline=None)
@given(models(max_slots=8, max_traj=10, min_slots=1), st.data())
def test_incremental_matches_scratch(model, data):
    inc = IncrementalInfluence(model)
    members: set[int] = set()
    for _ in range(data.draw(st.integers(1, 25))):
        s = data.draw(st.integers(0, model.slot_count - 1))
        if s in members:
            inc.remove(s)
            members.discard(s)
        else:
            probe = inc.gain(s)
            before = inc.value
            inc.add(s)
            members.add(s)
            assert inc.value - before == pytest.approx(probe, abs=1e-9)
        assert inc.value == pytest.approx(influence(model, members), abs=1e-9)
    inc.resync()
    assert inc.value == influence(model, members)


def test_leave_one_out_complements():
    m = InfluenceModel.from_entries([[(0, 1.0), (1, 0.5)], [(0, 0.4)], [(1, 0.3), (2, 1.0)]], 3)
    inc = IncrementalInfluence(m, [0, 1, 2])
    dense = m.dense()
    loo = inc.leave_one_out(dense[[0, 1, 2]])
    for i, s in enumerate((0, 1, 2)):
        rest = [x for x in (0, 1, 2) if x != s]
        assert math.fsum(1 - loo[i]) == pytest.approx(influence(m, rest), abs=1e-12)
