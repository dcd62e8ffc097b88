"""Slow, independent re-implementations used as test oracles.

Nothing here imports the evaluation code under test; models are read
through their raw CSR arrays only.
"""

import itertools
import math


def rows_of(model):
    """Per-slot {trajectory: probability} dicts straight from the CSR arrays."""
    out = []
    for s in range(len(model.indptr) - 1):
        lo, hi = int(model.indptr[s]), int(model.indptr[s + 1])
        out.append({int(t): float(p) for t, p in zip(model.indices[lo:hi], model.probs[lo:hi])})
    return out


def naive_influence(model, slots):
    rows = rows_of(model)
    total = 0.0
    for t in range(model.trajectory_count):
        miss = 1.0
        for s in sorted(set(slots)):
            miss *= 1.0 - rows[s].get(t, 0.0)
        total += 1.0 - miss
    return total


def naive_regret(demand, payment, supplied, gamma):
    if supplied < demand:
        return payment * (1.0 - gamma * supplied / demand)
    return payment * (supplied - demand) / demand


def naive_optimum(model, advertisers, gamma):
    """min over itertools.product of bins; returns (regret, assignment)."""
    n, ell = len(advertisers), model.slot_count
    best = (math.inf, None)
    for vec in itertools.product(range(n + 1), repeat=ell):
        value = 0.0
        for k, adv in enumerate(advertisers):
            held = [s for s, b in enumerate(vec) if b == k + 1]
            value += naive_regret(adv.demand, adv.payment, naive_influence(model, held), gamma)
        if value < best[0] - 1e-12:
            best = (value, vec)
    return best
