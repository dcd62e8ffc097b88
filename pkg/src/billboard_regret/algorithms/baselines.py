"""Comparison policies: budget-effective greedy, synchronous greedy and
advertiser-driven local search."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core import TOLERANCE, Advertiser, Allocation, InfluenceModel
from .exchange import DEFAULT_ITERATION_CAP
from .state import Move, SearchState, SearchTrace


def _best_addition(state: SearchState, k: int):
    """Pool slot minimising advertiser k's regret -> (slot, regret reduction)."""
    cand = sorted(state.pool)
    gains = state.add_gains(k, cand)
    reduction = state.regrets[k] - state.regret_at(k, state.supplied(k) + gains)
    b = int(np.argmax(reduction))
    return cand[b], float(reduction[b])


def _serve_one(state: SearchState, k: int, tol: float) -> bool:
    slot, reduction = _best_addition(state, k)
    if reduction <= tol:
        return False
    state.assign(k, slot)
    return True


def baseline_bg(
    model: InfluenceModel,
    advertisers: Sequence[Advertiser],
    gamma: float,
    *,
    tol: float = TOLERANCE,
) -> Allocation:
    """Serve advertisers one at a time by descending payment/demand.

    Each keeps taking the slot that lowers its regret most until satisfied,
    out of slots, or no slot helps.
    """
    state = SearchState(model, advertisers, gamma)
    for k in state.by_ratio():
        while state.unsatisfied(k) and state.pool:
            if not _serve_one(state, k, tol):
                break
    return state.allocation()


def run_synchronous(state: SearchState, tol: float = TOLERANCE) -> None:
    """Round-robin greedy over unsatisfied advertisers, continuing ``state``.

    When the slots run out with two or more advertisers still short, the
    least budget-effective of them is stripped and its slots are handed to
    the others; this repeats while at least two remain short.
    """
    order = state.by_ratio()
    stripped: set[int] = set()
    while True:
        active = [k for k in order if k not in stripped and state.unsatisfied(k)]
        while active and state.pool:
            still = []
            for k in active:
                if not state.pool:
                    still.append(k)
                elif _serve_one(state, k, tol) and state.unsatisfied(k):
                    still.append(k)
            active = still
        short = [k for k in order if k not in stripped and state.unsatisfied(k)]
        if state.pool or len(short) < 2:
            return
        victim = short[-1]
        for slot in list(state.held[victim]):
            state.release(victim, slot)
        stripped.add(victim)


def baseline_sg(
    model: InfluenceModel,
    advertisers: Sequence[Advertiser],
    gamma: float,
    *,
    tol: float = TOLERANCE,
) -> Allocation:
    state = SearchState(model, advertisers, gamma)
    run_synchronous(state, tol)
    return state.allocation()


def baseline_als(
    model: InfluenceModel,
    advertisers: Sequence[Advertiser],
    gamma: float,
    seed: int,
    *,
    iteration_cap: int = DEFAULT_ITERATION_CAP,
    tol: float = TOLERANCE,
) -> tuple[Allocation, SearchTrace]:
    """Random start, synchronous greedy completion, then whole-set swaps.

    The random start deals shuffled slots to advertisers (descending
    payment/demand) until each one's additive influence estimate reaches its
    demand.  The search swaps the complete slot sets of two advertisers while
    that lowers total regret.
    """
    state = SearchState(model, advertisers, gamma)
    rng = np.random.default_rng(seed)
    shuffled = [int(s) for s in rng.permutation(sorted(state.pool))]
    for k in state.by_ratio():
        estimate = 0.0
        while estimate < state.demand[k] and shuffled:
            slot = shuffled.pop(0)
            state.assign(k, slot)
            estimate += state.single[slot]
    run_synchronous(state, tol)

    trace = SearchTrace("ALS", initial=state.total())
    order = sorted(range(len(state.advertisers)), key=lambda k: state.advertisers[k].id)
    while True:
        moved = False
        for a, i in enumerate(order):
            for j in order[a + 1:]:
                si, sj = state.supplied(i), state.supplied(j)
                now = state.regrets[i] + state.regrets[j]
                then = state.regret_at(i, sj) + state.regret_at(j, si)
                if not now - then > tol:
                    continue
                before = state.total()
                state.exchange_sets(i, j)
                after = state.total()
                if not after < before - tol:
                    state.exchange_sets(i, j)
                    continue
                ids = (state.advertisers[i].id, state.advertisers[j].id)
                trace.moves.append(Move("set_swap", ids, tuple(state.held[j]),
                                        tuple(state.held[i]), before, after))
                moved = True
                if len(trace.moves) >= iteration_cap:
                    trace.termination = "iteration_cap"
                    return state.allocation(), trace
        if not moved:
            return state.allocation(), trace
