"""Effective allocation and the three-tier split of leftover slots."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import TOLERANCE, Advertiser, Allocation, InfluenceModel
from .state import SearchState


@dataclass(frozen=True)
class SplitResult:
    top: list[int]
    middle: list[int]
    rest: list[int]

    @property
    def pruned_fraction(self) -> float:
        m = len(self.top) + len(self.middle) + len(self.rest)
        return (m - len(self.rest)) / m if m else 0.0


def split_unallocated(pool: Sequence[int], single_influence) -> SplitResult:
    """Peel floor(m/3) most influential slots twice; the rest is the low tier.

    ``single_influence[s]`` is the individual influence of slot ``s``.  Each
    list is ordered by descending individual influence, then SlotId.
    """
    ranked = sorted((int(s) for s in pool), key=lambda s: (-single_influence[s], s))
    n1 = len(ranked) // 3
    top, remainder = ranked[:n1], ranked[n1:]
    n2 = len(remainder) // 3
    return SplitResult(top, remainder[:n2], remainder[n2:])


def _fill_by_estimate(state: SearchState, order, ranked: list[int], skip_rule: bool) -> None:
    """Hand out slots from ``ranked`` until each additive estimate reaches demand."""
    for k in order:
        estimate = 0.0
        demand = state.demand[k]
        while estimate < demand and ranked:
            pick = 0
            if skip_rule:
                fits = [i for i, s in enumerate(ranked) if estimate + state.single[s] <= demand]
                if not fits:
                    break  # phase two decides whether overshooting pays
                pick = fits[0]
            slot = ranked.pop(pick)
            state.assign(k, slot)
            estimate += state.single[slot]


def top_up(state: SearchState, order, tol: float = TOLERANCE) -> None:
    """Add the best regret-reduction-per-unit-influence slot while unsatisfied."""
    for k in order:
        while state.unsatisfied(k) and state.pool:
            cand = sorted(state.pool)
            gains = state.add_gains(k, cand)
            reduction = state.regrets[k] - state.regret_at(k, state.supplied(k) + gains)
            own = state.single[cand]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(own > 0, reduction / own, -np.inf)
            b = int(np.argmax(ratio))
            if ratio[b] <= 0 or reduction[b] <= tol:
                break
            state.assign(k, cand[b])


def run_effective(state: SearchState, *, skip_rule: bool = False, tol: float = TOLERANCE) -> None:
    order = state.by_ratio()
    ranked = state.ranked(state.pool)
    _fill_by_estimate(state, order, ranked, skip_rule)
    top_up(state, order, tol)


def effective_allocation(
    model: InfluenceModel,
    advertisers: Sequence[Advertiser],
    gamma: float,
    *,
    skip_rule: bool = False,
) -> Allocation:
    """Two-phase allocation.

    Advertisers are served by descending payment/demand.  Phase one walks
    the slots by descending individual influence, giving each advertiser
    slots until the *sum* of individual influences reaches its demand.
    Phase two recomputes true influence and, while an advertiser is still
    short, adds the slot maximising regret reduction per unit of its own
    influence (ties to the lowest SlotId); it stops early once no candidate
    reduces regret.

    ``skip_rule`` makes phase one pass over slots that would push the
    estimate past the demand; once nothing fits, phase one stops for that
    advertiser and phase two finishes the job.
    """
    state = SearchState(model, advertisers, gamma)
    run_effective(state, skip_rule=skip_rule)
    return state.allocation()
