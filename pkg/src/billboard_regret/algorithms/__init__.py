"""Allocation policies and a uniform way to invoke them by name."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..core import TOLERANCE, Advertiser, Allocation, InfluenceModel
from .baselines import baseline_als, baseline_bg, baseline_sg, run_synchronous
from .effective import SplitResult, effective_allocation, split_unallocated
from .exchange import DEFAULT_ITERATION_CAP, eaoe, ebte, eboe
from .state import Move, SearchState, SearchTrace

PROPOSED = ("EA", "EAOE", "EBOE", "EBTE")
BASELINES = ("BG", "SG", "ALS")
POLICIES = PROPOSED + BASELINES


@dataclass(frozen=True)
class PolicyOptions:
    best_improvement: bool = False
    ea_skip_rule: bool = False
    iteration_cap: int = DEFAULT_ITERATION_CAP
    tol: float = TOLERANCE


def run_policy(
    name: str,
    model: InfluenceModel,
    advertisers: Sequence[Advertiser],
    gamma: float,
    options: PolicyOptions = PolicyOptions(),
    seed: int = 0,
) -> tuple[Allocation, SearchTrace | None]:
    """Run policy ``name``; the trace is None for non-search policies."""
    o = options
    search = dict(best_improvement=o.best_improvement, iteration_cap=o.iteration_cap,
                  skip_rule=o.ea_skip_rule, tol=o.tol)
    if name == "EA":
        return effective_allocation(model, advertisers, gamma, skip_rule=o.ea_skip_rule), None
    if name == "EAOE":
        return eaoe(model, advertisers, gamma, **search)
    if name == "EBOE":
        return eboe(model, advertisers, gamma, **search)
    if name == "EBTE":
        return ebte(model, advertisers, gamma, **search)
    if name == "BG":
        return baseline_bg(model, advertisers, gamma, tol=o.tol), None
    if name == "SG":
        return baseline_sg(model, advertisers, gamma, tol=o.tol), None
    if name == "ALS":
        return baseline_als(model, advertisers, gamma, seed,
                            iteration_cap=o.iteration_cap, tol=o.tol)
    raise KeyError(f"unknown policy {name!r}; expected one of {', '.join(POLICIES)}")


__all__ = [
    "POLICIES", "PROPOSED", "BASELINES", "PolicyOptions", "run_policy",
    "effective_allocation", "split_unallocated", "SplitResult",
    "eaoe", "eboe", "ebte", "baseline_bg", "baseline_sg", "baseline_als",
    "run_synchronous", "SearchState", "SearchTrace", "Move",
]
