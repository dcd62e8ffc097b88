"""Mutable allocation state shared by the allocation policies."""

from __future__ import annotations

import math
from bisect import insort
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import (
    TOLERANCE,
    Advertiser,
    Allocation,
    IncrementalInfluence,
    InfluenceModel,
    check_gamma,
    regret_values,
)

# rows x trajectories budget for one block of pair-overlap products
_PAIR_BLOCK = 4_000_000


@dataclass
class Move:
    kind: str
    advertisers: tuple[int, ...]
    removed: tuple[int, ...]
    added: tuple[int, ...]
    before: float
    after: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "advertisers": list(self.advertisers),
            "removed": list(self.removed),
            "added": list(self.added),
            "before": self.before,
            "after": self.after,
        }


@dataclass
class SearchTrace:
    """Accepted moves of one local search and why it stopped."""

    policy: str
    initial: float = math.nan
    moves: list[Move] = field(default_factory=list)
    termination: str = "no_improving_move"

    def __len__(self) -> int:
        return len(self.moves)

    @property
    def final(self) -> float:
        return self.moves[-1].after if self.moves else self.initial

    def strictly_decreasing(self, tol: float = TOLERANCE) -> bool:
        prev = self.initial
        for m in self.moves:
            if not (m.before == prev and m.after < m.before - tol):
                return False
            prev = m.after
        return True

    def to_jsonl(self) -> str:
        import json

        head = {"policy": self.policy, "initial": self.initial,
                "termination": self.termination, "moves": len(self.moves)}
        lines = [json.dumps(head)]
        lines += [json.dumps(m.to_dict()) for m in self.moves]
        return "\n".join(lines) + "\n"


class SearchState:
    """Slot sets per advertiser backed by incremental influence evaluators.

    Advertisers are addressed by position ``k`` in the list given at
    construction.  Held slots are kept in scan order: descending individual
    influence, then ascending SlotId.
    """

    def __init__(self, model: InfluenceModel, advertisers: Sequence[Advertiser], gamma: float):
        self.gamma = check_gamma(gamma)
        self.source = model
        self.model = model.compact()
        self.P = self.model.dense()
        self.single = np.asarray(model.individual_influence)
        self.advertisers = list(advertisers)
        self.demand = np.array([a.demand for a in self.advertisers], dtype=float)
        self.payment = np.array([a.payment for a in self.advertisers], dtype=float)
        n = len(self.advertisers)
        self.sets = [IncrementalInfluence(self.model) for _ in range(n)]
        self.held: list[list[int]] = [[] for _ in range(n)]
        self.pool: set[int] = set(range(model.slot_count))
        self.regrets = regret_values(self.demand, self.payment, np.zeros(n), self.gamma)

    # ------------------------------------------------------------ basics

    def key(self, slot: int):
        return (-self.single[slot], slot)

    def ranked(self, slots) -> list[int]:
        return sorted(slots, key=self.key)

    def by_ratio(self) -> list[int]:
        """Advertiser positions by descending payment/demand, then id."""
        return sorted(range(len(self.advertisers)),
                      key=lambda k: (-self.advertisers[k].ratio, self.advertisers[k].id))

    def supplied(self, k: int) -> float:
        return self.sets[k].value

    def unsatisfied(self, k: int) -> bool:
        return self.demand[k] > self.sets[k].value

    def regret_at(self, k: int, values) -> np.ndarray:
        return regret_values(self.demand[k], self.payment[k], values, self.gamma)

    def _refresh(self, k: int) -> None:
        self.sets[k].resync()
        self.regrets[k] = self.regret_at(k, self.sets[k].value)

    def total(self) -> float:
        # summed like the report (unsatisfied + excessive) so the bits agree
        short = [self.demand[k] > self.sets[k].value for k in range(len(self.regrets))]
        unsat = math.fsum(r for r, s in zip(self.regrets.tolist(), short) if s)
        exc = math.fsum(r for r, s in zip(self.regrets.tolist(), short) if not s)
        return unsat + exc

    def assign(self, k: int, slot: int) -> None:
        self.pool.remove(slot)
        self.sets[k].add(slot)
        insort(self.held[k], slot, key=self.key)
        self._refresh(k)

    def release(self, k: int, slot: int) -> None:
        self.sets[k].remove(slot)
        self.held[k].remove(slot)
        self.pool.add(slot)
        self._refresh(k)

    def exchange_sets(self, i: int, j: int) -> None:
        self.sets[i], self.sets[j] = self.sets[j], self.sets[i]
        self.held[i], self.held[j] = self.held[j], self.held[i]
        self.regrets[i] = self.regret_at(i, self.sets[i].value)
        self.regrets[j] = self.regret_at(j, self.sets[j].value)

    def allocation(self) -> Allocation:
        return Allocation(
            {a.id: list(self.held[k]) for k, a in enumerate(self.advertisers)},
            sorted(self.pool),
        )

    # ------------------------------------------------------------ evaluation

    def add_gains(self, k: int, candidates: Sequence[int]) -> np.ndarray:
        """Influence gain of each candidate if added alone to advertiser ``k``."""
        if not len(candidates):
            return np.zeros(0)
        return self.P[list(candidates)] @ self.sets[k].complement()

    def _without_each(self, k: int):
        """Leave-one-out complements and influences for each held slot."""
        loo = self.sets[k].leave_one_out(self.P[self.held[k]])
        return loo, np.sum(1.0 - loo, axis=1)

    def swap_in(self, k: int, incoming: Sequence[int]) -> np.ndarray:
        """``out[x, y]``: influence of ``k`` after dropping held[x], adding incoming[y]."""
        loo, base = self._without_each(k)
        return base[:, None] + loo @ self.P[list(incoming)].T

    def swap_in_pairs(self, k: int, incoming: Sequence[int]):
        """Influence after dropping held[x] and adding each unordered pair.

        Pairs are ``(incoming[a], incoming[b])`` for ``a < b`` in lexicographic
        order; returns ``(values, a_idx, b_idx)``.
        """
        loo, base = self._without_each(k)
        rows = self.P[list(incoming)]
        gain = loo @ rows.T
        a_idx, b_idx = np.triu_indices(len(incoming), 1)
        values = base[:, None] + gain[:, a_idx] + gain[:, b_idx]
        touched = (rows > 0).astype(float)
        shared = np.flatnonzero((touched @ touched.T)[a_idx, b_idx] > 0)
        # pairs sharing trajectories overlap: subtract sum_t q_t p_a p_b
        step = max(1, _PAIR_BLOCK // max(1, rows.shape[1]))
        for lo in range(0, shared.size, step):
            cols = shared[lo:lo + step]
            both = rows[a_idx[cols]] * rows[b_idx[cols]]
            values[:, cols] -= loo @ both.T
        return values, a_idx, b_idx


def first_in_scan(improvement: np.ndarray, *, column_major: bool, best: bool, tol: float):
    """Index of the accepted move in an improvement matrix, or None.

    Scan order is row-major unless ``column_major``; ``best`` picks the largest
    improvement (earliest in scan order on ties) instead of the first one
    above ``tol``.
    """
    if improvement.size == 0:
        return None
    grid = improvement.T if column_major else improvement
    flat = grid.ravel()
    if best:
        pos = int(np.argmax(flat))
        if not flat[pos] > tol:
            return None
    else:
        hits = np.flatnonzero(flat > tol)
        if hits.size == 0:
            return None
        pos = int(hits[0])
    r, c = divmod(pos, grid.shape[1])
    return (c, r) if column_major else (r, c)
