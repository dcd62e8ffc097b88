"""Exact minimum-regret allocation by exhaustive enumeration (tiny instances).

Every slot goes to one of ``n + 1`` bins (the pool or one advertiser), so
``(n + 1) ** slots`` assignments are scored.  Assignments are encoded as
vectors with ``0`` for the pool and ``k + 1`` for the k-th advertiser; ties
resolve to the lexicographically smallest vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Advertiser, Allocation, InfluenceModel, check_gamma, influence, regret, regret_values
from .errors import OracleLimitError

DEFAULT_LIMIT = 10**7
_CHUNK = 1 << 18
_LOW_BITS = 12


@dataclass(frozen=True)
class OracleResult:
    allocation: Allocation
    regret: float
    enumerated: int
    assignment: tuple[int, ...]


def enumeration_size(n_slots: int, n_advertisers: int) -> int:
    return (n_advertisers + 1) ** n_slots


def _complements(rows: np.ndarray) -> np.ndarray:
    """Complement products for every subset of ``rows`` (bit b = row b)."""
    table = np.ones((1 << rows.shape[0], rows.shape[1]))
    for b, row in enumerate(rows):
        half = 1 << b
        table[half:2 * half] = table[:half] * (1.0 - row)
    return table


def subset_influences(model: InfluenceModel, slots: Sequence[int]) -> np.ndarray:
    """Influence of every subset of ``slots`` indexed by bitmask."""
    sub = model.select(slots).compact()
    rows = sub.dense()
    lo_bits = min(len(slots), _LOW_BITS)
    lo = _complements(rows[:lo_bits])
    hi = _complements(rows[lo_bits:])
    reached = rows.shape[1] - hi @ lo.T
    return np.maximum(reached, 0.0).ravel()


def _snap_near_demands(table, model, slots, demands, tol=1e-9):
    """Recompute table entries that sit within ``tol`` of a demand exactly.

    Regret jumps at ``supplied == demand``, so a matrix-product rounding
    error there would misjudge which branch applies.
    """
    if not len(demands) or not table.size:
        return table
    near = np.zeros(table.size, dtype=bool)
    for d in np.unique(demands):
        near |= np.abs(table - d) <= tol * max(1.0, d)
    for mask in np.flatnonzero(near).tolist():
        table[mask] = influence(model, [slots[b] for b in range(len(slots)) if mask >> b & 1])
    return table


def _to_allocation(vector, slots, advertisers) -> Allocation:
    alloc = Allocation({a.id: [] for a in advertisers}, [])
    for s, b in zip(slots, vector):
        if b == 0:
            alloc.pool.append(int(s))
        else:
            alloc.slots[advertisers[b - 1].id].append(int(s))
    return alloc


def _check_size(n_slots, n_adv, limit):
    size = enumeration_size(n_slots, n_adv)
    if size > limit:
        raise OracleLimitError(size, limit)
    return size


def brute_force(
    model: InfluenceModel,
    advertisers: Sequence[Advertiser],
    gamma: float,
    slots: Sequence[int] | None = None,
    limit: int = DEFAULT_LIMIT,
) -> OracleResult:
    """Iterative base-(n+1) counter over all assignments, vectorised in chunks."""
    gamma = check_gamma(gamma)
    slots = list(range(model.slot_count)) if slots is None else [int(s) for s in slots]
    n, ell = len(advertisers), len(slots)
    size = _check_size(ell, n, limit)
    table = subset_influences(model, slots)
    table = _snap_near_demands(table, model, slots, [a.demand for a in advertisers])
    demand = np.array([a.demand for a in advertisers])
    payment = np.array([a.payment for a in advertisers])
    base = n + 1
    place = base ** np.arange(ell - 1, -1, -1, dtype=np.int64)
    bits = (1 << np.arange(ell, dtype=np.int64))

    best_val, best_idx = np.inf, 0
    for start in range(0, size, _CHUNK):
        counter = np.arange(start, min(size, start + _CHUNK), dtype=np.int64)
        digits = (counter[:, None] // place[None, :]) % base
        total = np.zeros(counter.size)
        for k in range(n):
            mask = ((digits == k + 1) * bits).sum(axis=1)
            total = total + regret_values(demand[k], payment[k], table[mask], gamma)
        pos = int(np.argmin(total))
        if total[pos] < best_val:
            best_val, best_idx = float(total[pos]), start + pos
    vector = tuple(int(best_idx // p % base) for p in place)
    return OracleResult(_to_allocation(vector, slots, advertisers), best_val, size, vector)


def brute_force_recursive(
    model: InfluenceModel,
    advertisers: Sequence[Advertiser],
    gamma: float,
    slots: Sequence[int] | None = None,
    limit: int = DEFAULT_LIMIT,
) -> OracleResult:
    """Depth-first branch over slot bins, scoring leaves from scratch.

    Independent of :func:`brute_force`; slow, meant for cross-checking.
    """
    gamma = check_gamma(gamma)
    slots = list(range(model.slot_count)) if slots is None else [int(s) for s in slots]
    n = len(advertisers)
    _check_size(len(slots), n, limit)
    memo: dict[frozenset, float] = {}
    bins: list[list[int]] = [[] for _ in range(n)]
    vector: list[int] = []
    best = {"value": np.inf, "vector": None}
    count = 0

    def score() -> float:
        out = 0.0
        for adv, held in zip(advertisers, bins):
            key = frozenset(held)
            if key not in memo:
                memo[key] = influence(model, held)
            out += regret(adv, memo[key], gamma)
        return out

    def branch(depth: int) -> None:
        nonlocal count
        if depth == len(slots):
            count += 1
            value = score()
            if value < best["value"]:
                best["value"], best["vector"] = value, tuple(vector)
            return
        for b in range(n + 1):
            vector.append(b)
            if b:
                bins[b - 1].append(slots[depth])
            branch(depth + 1)
            if b:
                bins[b - 1].pop()
            vector.pop()

    branch(0)
    vec = best["vector"]
    return OracleResult(_to_allocation(vec, slots, advertisers), float(best["value"]), count, vec)
