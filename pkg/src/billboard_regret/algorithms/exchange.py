"""Exchange local searches started from the effective allocation.

All three accept only moves lowering total regret by more than the
tolerance and stop at a fixed point (or at the iteration cap, which is
reported in the trace).  Moves are taken first-improvement in scan order
unless ``best_improvement`` is set, in which case the largest improvement
within the current neighbourhood wins.
"""

from __future__ import annotations

from bisect import insort
from typing import Sequence

from ..core import TOLERANCE, Advertiser, Allocation, InfluenceModel
from .effective import run_effective, split_unallocated
from .state import Move, SearchState, SearchTrace, first_in_scan

DEFAULT_ITERATION_CAP = 10_000


class _Search:
    def __init__(self, state: SearchState, trace: SearchTrace, cap: int, tol: float):
        self.state = state
        self.trace = trace
        self.cap = cap
        self.tol = tol

    @property
    def capped(self) -> bool:
        return len(self.trace.moves) >= self.cap

    def commit(self, kind, ks, removed, added, before, undo) -> bool:
        """Record a move already applied to the state, or roll it back.

        The neighbourhood matrices and the incremental evaluators may disagree
        in the last bits; a move whose realised gain is not above ``tol`` is
        undone and reported as a non-move.
        """
        after = self.state.total()
        if not after < before - self.tol:
            undo()
            return False
        ids = tuple(self.state.advertisers[k].id for k in ks)
        self.trace.moves.append(Move(kind, ids, tuple(removed), tuple(added), before, after))
        return True


def _start(model, advertisers, gamma, policy, skip_rule):
    state = SearchState(model, advertisers, gamma)
    run_effective(state, skip_rule=skip_rule)
    trace = SearchTrace(policy, initial=state.total())
    return state, trace


def _advertiser_positions(state: SearchState) -> list[int]:
    return sorted(range(len(state.advertisers)), key=lambda k: state.advertisers[k].id)


# ---------------------------------------------------------------- EAOE


def _swap_between(search: _Search, i: int, j: int, best: bool) -> bool:
    st = search.state
    if not st.held[i] or not st.held[j]:
        return False
    hi, hj = list(st.held[i]), list(st.held[j])
    gain_i = st.swap_in(i, hj)            # [x, y]
    gain_j = st.swap_in(j, hi).T          # [x, y]
    imp = (st.regrets[i] + st.regrets[j]) - (st.regret_at(i, gain_i) + st.regret_at(j, gain_j))
    hit = first_in_scan(imp, column_major=False, best=best, tol=search.tol)
    if hit is None:
        return False
    x, y = hi[hit[0]], hj[hit[1]]
    before = st.total()
    _move_slot(st, i, j, x)
    _move_slot(st, j, i, y)

    def undo():
        _move_slot(st, j, i, x)
        _move_slot(st, i, j, y)

    return search.commit("swap", (i, j), (x,), (y,), before, undo)


def _move_slot(st: SearchState, src: int, dst: int, slot: int) -> None:
    st.release(src, slot)
    st.assign(dst, slot)


def eaoe(
    model: InfluenceModel,
    advertisers: Sequence[Advertiser],
    gamma: float,
    *,
    best_improvement: bool = False,
    iteration_cap: int = DEFAULT_ITERATION_CAP,
    skip_rule: bool = False,
    tol: float = TOLERANCE,
) -> tuple[Allocation, SearchTrace]:
    """One-for-one slot swaps between ordered advertiser pairs."""
    state, trace = _start(model, advertisers, gamma, "EAOE", skip_rule)
    search = _Search(state, trace, iteration_cap, tol)
    order = _advertiser_positions(state)
    while True:
        moved = False
        for i in order:
            for j in order:
                if i == j:
                    continue
                while _swap_between(search, i, j, best_improvement):
                    moved = True
                    if search.capped:
                        trace.termination = "iteration_cap"
                        return state.allocation(), trace
        if not moved:
            return state.allocation(), trace


# ---------------------------------------------------------------- EBOE / EBTE


def _low_tier(state: SearchState) -> list[int]:
    return split_unallocated(state.pool, state.single).rest


def _exchange_with_tier(search: _Search, k: int, tier: list[int], width: int, best: bool) -> bool:
    st = search.state
    if not st.held[k] or len(tier) < width:
        return False
    held = list(st.held[k])
    if width == 1:
        values = st.swap_in(k, tier)
        incoming = [(s,) for s in tier]
    else:
        values, a_idx, b_idx = st.swap_in_pairs(k, tier)
        incoming = [(tier[a], tier[b]) for a, b in zip(a_idx.tolist(), b_idx.tolist())]
    imp = st.regrets[k] - st.regret_at(k, values)
    # scan: incoming candidate first, then the held slot it replaces
    hit = first_in_scan(imp, column_major=True, best=best, tol=search.tol)
    if hit is None:
        return False
    out_slot, added = held[hit[0]], incoming[hit[1]]
    before = st.total()
    st.release(k, out_slot)
    for s in added:
        st.assign(k, s)
        tier.remove(s)
    insort(tier, out_slot, key=st.key)

    def undo():
        for s in added:
            st.release(k, s)
            insort(tier, s, key=st.key)
        tier.remove(out_slot)
        st.assign(k, out_slot)

    kind = "exchange_1x1" if width == 1 else "exchange_1x2"
    return search.commit(kind, (k,), (out_slot,), added, before, undo)


def _tier_search(model, advertisers, gamma, policy, width, best_improvement,
                 iteration_cap, skip_rule, tol):
    state, trace = _start(model, advertisers, gamma, policy, skip_rule)
    search = _Search(state, trace, iteration_cap, tol)
    tier = _low_tier(state)
    order = _advertiser_positions(state)
    while True:
        moved = False
        for k in order:
            while _exchange_with_tier(search, k, tier, width, best_improvement):
                moved = True
                if search.capped:
                    trace.termination = "iteration_cap"
                    return state.allocation(), trace
        if not moved:
            return state.allocation(), trace


def eboe(
    model: InfluenceModel,
    advertisers: Sequence[Advertiser],
    gamma: float,
    *,
    best_improvement: bool = False,
    iteration_cap: int = DEFAULT_ITERATION_CAP,
    skip_rule: bool = False,
    tol: float = TOLERANCE,
) -> tuple[Allocation, SearchTrace]:
    """Swap one held slot for one slot of the low-influence leftover tier."""
    return _tier_search(model, advertisers, gamma, "EBOE", 1, best_improvement,
                        iteration_cap, skip_rule, tol)


def ebte(
    model: InfluenceModel,
    advertisers: Sequence[Advertiser],
    gamma: float,
    *,
    best_improvement: bool = False,
    iteration_cap: int = DEFAULT_ITERATION_CAP,
    skip_rule: bool = False,
    tol: float = TOLERANCE,
) -> tuple[Allocation, SearchTrace]:
    """Swap one held slot for an unordered pair from the low-influence tier."""
    return _tier_search(model, advertisers, gamma, "EBTE", 2, best_improvement,
                        iteration_cap, skip_rule, tol)
