"""Influence and regret evaluation over an immutable slot/trajectory model.

A slot set ``S`` influences trajectory ``t`` with probability
``1 - prod_{s in S} (1 - Pr(s, t))``; the influence of ``S`` is the sum of
those probabilities over all trajectories.  An advertiser asking for
``demand`` influence units against ``payment`` incurs

* ``payment * (1 - gamma * I / demand)`` when ``I < demand`` (unsatisfied),
* ``payment * (I - demand) / demand`` otherwise (excessive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, InputDomainError

#: Minimum regret decrease that counts as a strict improvement.
TOLERANCE = 1e-9

UNSATISFIED = "unsatisfied"
EXCESSIVE = "excessive"
EXACT = "exact"


class InfluenceModel:
    """Sparse slot -> (trajectory, probability) table in CSR layout.

    Slot ``s`` owns ``indices[indptr[s]:indptr[s + 1]]`` (strictly
    increasing trajectory indices) with matching ``probs`` in (0, 1].
    Instances are treated as immutable; the arrays are made read-only.
    """

    def __init__(self, indptr, indices, probs, trajectory_count: int):
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        probs = np.asarray(probs, dtype=np.float64)
        if indptr.ndim != 1 or indptr.size == 0 or indptr[0] != 0:
            raise InputDomainError("indptr must be a 1-d array starting at 0")
        if np.any(np.diff(indptr) < 0) or indptr[-1] != indices.size:
            raise InputDomainError("indptr is not a valid row pointer")
        if indices.shape != probs.shape:
            raise InputDomainError("indices and probs differ in length")
        if trajectory_count < 0:
            raise InputDomainError("trajectory_count must be non-negative")
        if indices.size:
            if indices.min() < 0 or indices.max() >= trajectory_count:
                raise InputDomainError("trajectory index out of range")
            if not np.all((probs > 0.0) & (probs <= 1.0)):
                raise InputDomainError("probabilities must lie in (0, 1]")
            step = np.diff(indices)
            row_start = np.zeros(indices.size, dtype=bool)
            row_start[indptr[:-1][np.diff(indptr) > 0]] = True
            if np.any(step[~row_start[1:]] <= 0):
                raise InputDomainError(
                    "trajectory indices must be strictly increasing per slot"
                )
        for arr in (indptr, indices, probs):
            arr.setflags(write=False)
        self.indptr = indptr
        self.indices = indices
        self.probs = probs
        self.trajectory_count = int(trajectory_count)

    @classmethod
    def from_entries(
        cls, entries: Sequence[Iterable[tuple[int, float]]], trajectory_count: int
    ) -> "InfluenceModel":
        """Build from per-slot ``(trajectory, probability)`` lists.

        Lists are sorted by trajectory; a repeated trajectory within one
        slot is rejected.
        """
        indptr = [0]
        indices: list[int] = []
        probs: list[float] = []
        for row in entries:
            row = sorted(row)
            for (t, p) in row:
                indices.append(int(t))
                probs.append(float(p))
            indptr.append(len(indices))
        return cls(indptr, indices, probs, trajectory_count)

    @property
    def slot_count(self) -> int:
        return self.indptr.size - 1

    def __len__(self) -> int:
        return self.slot_count

    def __repr__(self) -> str:
        return (
            f"InfluenceModel(slots={self.slot_count}, "
            f"trajectories={self.trajectory_count}, entries={self.indices.size})"
        )

    def entries(self, slot: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[slot], self.indptr[slot + 1]
        return self.indices[lo:hi], self.probs[lo:hi]

    def entry_counts(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def individual_influence(self) -> np.ndarray:
        """``I({s})`` for every slot, evaluated exactly as :func:`influence`."""
        out = np.empty(self.slot_count)
        for s in range(self.slot_count):
            _, p = self.entries(s)
            out[s] = math.fsum((1.0 - (1.0 - p)).tolist())
        out.setflags(write=False)
        return out

    def dense(self) -> np.ndarray:
        """Slot x trajectory probability matrix (zeros where absent)."""
        mat = np.zeros((self.slot_count, self.trajectory_count))
        rows = np.repeat(np.arange(self.slot_count), self.entry_counts())
        mat[rows, self.indices] = self.probs
        return mat

    def compact(self) -> "InfluenceModel":
        """Same slots, with trajectory columns no slot touches dropped.

        Influence values are unchanged; only the column numbering moves.
        """
        used, inverse = np.unique(self.indices, return_inverse=True)
        if used.size == self.trajectory_count:
            return self
        return InfluenceModel(self.indptr, inverse, self.probs, used.size)

    def select(self, slots: Sequence[int]) -> "InfluenceModel":
        """Sub-model holding ``slots`` in the given order, renumbered 0.."""
        indptr = [0]
        chunks_i, chunks_p = [], []
        for s in slots:
            idx, p = self.entries(int(s))
            chunks_i.append(idx)
            chunks_p.append(p)
            indptr.append(indptr[-1] + idx.size)
        indices = np.concatenate(chunks_i) if chunks_i else np.zeros(0, np.int64)
        probs = np.concatenate(chunks_p) if chunks_p else np.zeros(0)
        return InfluenceModel(indptr, indices, probs, self.trajectory_count)


@dataclass(frozen=True)
class Advertiser:
    id: int
    demand: float
    payment: float

    def __post_init__(self):
        if not self.demand > 0:
            raise InputDomainError(f"advertiser {self.id}: demand must be > 0")
        if not self.payment > 0:
            raise InputDomainError(f"advertiser {self.id}: payment must be > 0")

    @property
    def ratio(self) -> float:
        """Payment per unit of demanded influence."""
        return self.payment / self.demand


@dataclass
class Allocation:
    """Disjoint slot lists per advertiser id, plus the unallocated pool."""

    slots: dict[int, list[int]]
    pool: list[int] = field(default_factory=list)

    @classmethod
    def empty(cls, advertiser_ids: Iterable[int], universe: Iterable[int]):
        return cls({a: [] for a in advertiser_ids}, sorted(int(s) for s in universe))

    def owner_of(self) -> dict[int, int]:
        return {s: a for a, held in self.slots.items() for s in held}

    def assigned(self) -> list[int]:
        return [s for held in self.slots.values() for s in held]

    def validate(self, universe: int | Iterable[int]) -> None:
        """Raise InputDomainError unless the lists partition ``universe``."""
        if isinstance(universe, (int, np.integer)):
            universe = range(int(universe))
        universe = set(int(s) for s in universe)
        seen: set[int] = set()
        for s in self.assigned() + list(self.pool):
            if s in seen:
                raise InputDomainError(f"slot {s} appears more than once")
            seen.add(s)
        if seen != universe:
            missing = sorted(universe - seen)[:5]
            extra = sorted(seen - universe)[:5]
            raise InputDomainError(
                f"allocation does not cover the slot universe "
                f"(missing {missing}, unknown {extra})"
            )

    def copy(self) -> "Allocation":
        return Allocation({a: list(v) for a, v in self.slots.items()}, list(self.pool))

    def to_dict(self) -> dict:
        return {
            "slots": {str(a): [int(s) for s in v] for a, v in self.slots.items()},
            "pool": [int(s) for s in self.pool],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Allocation":
        return cls(
            {int(a): [int(s) for s in v] for a, v in data["slots"].items()},
            [int(s) for s in data.get("pool", [])],
        )


@dataclass(frozen=True)
class AdvertiserRegret:
    id: int
    demand: float
    payment: float
    supplied: float
    regret: float
    branch: str


@dataclass(frozen=True)
class RegretReport:
    entries: tuple[AdvertiserRegret, ...]
    unsatisfied: float
    excessive: float
    total: float
    satisfied: int

    def by_id(self) -> dict[int, AdvertiserRegret]:
        return {e.id: e for e in self.entries}

    def to_dict(self) -> dict:
        return {
            "unsatisfied": self.unsatisfied,
            "excessive": self.excessive,
            "total": self.total,
            "satisfied": self.satisfied,
            "advertisers": [e.__dict__ for e in self.entries],
        }


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"gamma must lie in [0, 1], got {gamma}")
    return gamma


def _slot_array(model: InfluenceModel, slots: Iterable[int]) -> np.ndarray:
    arr = np.unique(np.fromiter((int(s) for s in slots), dtype=np.int64))
    if arr.size and (arr[0] < 0 or arr[-1] >= model.slot_count):
        raise InputDomainError(
            f"slot id out of range for a model with {model.slot_count} slots"
        )
    return arr


def influence(model: InfluenceModel, slots: Iterable[int]) -> float:
    """Expected number of trajectories reached by ``slots``.

    Slots are visited in ascending id order so the same set always yields the
    same bits; the outer sum is exactly rounded.
    """
    ids = _slot_array(model, slots)
    if ids.size == 0:
        return 0.0
    lo = model.indptr[ids]
    hi = model.indptr[ids + 1]
    idx = np.concatenate([model.indices[a:b] for a, b in zip(lo, hi)])
    if idx.size == 0:
        return 0.0
    p = np.concatenate([model.probs[a:b] for a, b in zip(lo, hi)])
    uniq, inv = np.unique(idx, return_inverse=True)
    comp = np.ones(uniq.size)
    np.multiply.at(comp, inv, 1.0 - p)
    return math.fsum((1.0 - comp).tolist())


def regret(adv: Advertiser, supplied: float, gamma: float) -> float:
    """Regret of supplying ``supplied`` influence to ``adv``.

    Equality ``supplied == demand`` takes the excessive branch and is 0.
    """
    gamma = check_gamma(gamma)
    if adv.demand > supplied:
        return adv.payment * (1.0 - gamma * (supplied / adv.demand))
    return adv.payment * ((supplied - adv.demand) / adv.demand)


def regret_values(demand, payment, supplied, gamma: float) -> np.ndarray:
    """Vectorised :func:`regret`; identical arithmetic, elementwise."""
    demand = np.asarray(demand, dtype=np.float64)
    payment = np.asarray(payment, dtype=np.float64)
    supplied = np.asarray(supplied, dtype=np.float64)
    short = payment * (1.0 - gamma * (supplied / demand))
    over = payment * ((supplied - demand) / demand)
    return np.where(demand > supplied, short, over)


def branch_of(adv: Advertiser, supplied: float) -> str:
    if adv.demand > supplied:
        return UNSATISFIED
    if supplied == adv.demand:
        return EXACT
    return EXCESSIVE


def total_regret(
    model: InfluenceModel,
    alloc: Allocation,
    advs: Sequence[Advertiser],
    gamma: float,
) -> RegretReport:
    """Per-advertiser regret decomposition of ``alloc`` and its totals."""
    gamma = check_gamma(gamma)
    ids = [a.id for a in advs]
    if len(set(ids)) != len(ids) or set(ids) != set(alloc.slots):
        raise InputDomainError("advertisers and allocation are not aligned by id")
    rows = []
    for adv in advs:
        supplied = influence(model, alloc.slots[adv.id])
        rows.append(
            AdvertiserRegret(
                adv.id,
                adv.demand,
                adv.payment,
                supplied,
                regret(adv, supplied, gamma),
                branch_of(adv, supplied),
            )
        )
    unsat = math.fsum(r.regret for r in rows if r.branch == UNSATISFIED)
    exc = math.fsum(r.regret for r in rows if r.branch != UNSATISFIED)
    satisfied = sum(r.branch != UNSATISFIED for r in rows)
    return RegretReport(tuple(rows), unsat, exc, unsat + exc, satisfied)


def marginal_regret_ratio(
    model: InfluenceModel,
    current: Iterable[int],
    candidate: int,
    adv: Advertiser,
    gamma: float,
) -> float:
    """Regret reduction from adding ``candidate``, per unit of its own influence."""
    current = set(int(s) for s in current)
    if candidate in current:
        raise InputDomainError(f"slot {candidate} is already in the set")
    own = influence(model, [candidate])
    if own <= 0.0:
        raise InputDomainError(f"slot {candidate} has zero individual influence")
    before = regret(adv, influence(model, current), gamma)
    after = regret(adv, influence(model, current | {candidate}), gamma)
    return (before - after) / own


class IncrementalInfluence:
    """Running influence of a growing/shrinking slot set.

    Per trajectory it keeps the number of covering slots with probability
    exactly 1 and the product of ``1 - Pr`` over the others, so adding or
    removing a slot touches only that slot's entries.  Products of
    trajectories left uncovered are reset to exactly 1 to stop drift.
    """

    def __init__(self, model: InfluenceModel, slots: Iterable[int] = ()):
        n = model.trajectory_count
        self.model = model
        self._sure = np.zeros(n, dtype=np.int64)
        self._cover = np.zeros(n, dtype=np.int64)
        self._prod = np.ones(n)
        self._members: set[int] = set()
        self.value = 0.0
        for s in slots:
            self.add(s)

    def __len__(self) -> int:
        return len(self._members)

    def __contains__(self, slot) -> bool:
        return slot in self._members

    @property
    def members(self) -> frozenset[int]:
        return frozenset(self._members)

    def _reached(self, idx: np.ndarray) -> np.ndarray:
        return np.where(self._sure[idx] > 0, 1.0, 1.0 - self._prod[idx])

    def add(self, slot: int) -> float:
        slot = int(slot)
        if slot in self._members:
            raise InputDomainError(f"slot {slot} already in the set")
        idx, p = self.model.entries(slot)
        before = self._reached(idx)
        sure = p >= 1.0
        self._sure[idx[sure]] += 1
        self._prod[idx[~sure]] *= 1.0 - p[~sure]
        self._cover[idx] += 1
        self._members.add(slot)
        self.value += float(np.sum(self._reached(idx) - before))
        return self.value

    def remove(self, slot: int) -> float:
        slot = int(slot)
        if slot not in self._members:
            raise InputDomainError(f"slot {slot} not in the set")
        idx, p = self.model.entries(slot)
        before = self._reached(idx)
        sure = p >= 1.0
        self._sure[idx[sure]] -= 1
        self._prod[idx[~sure]] /= 1.0 - p[~sure]
        self._cover[idx] -= 1
        bare = idx[self._cover[idx] == 0]
        self._prod[bare] = 1.0
        self._members.discard(slot)
        if self._members:
            self.value += float(np.sum(self._reached(idx) - before))
        else:
            self.value = 0.0
        return self.value

    def resync(self) -> float:
        """Replace the running value with the exactly rounded :func:`influence`.

        Regret jumps at ``supplied == demand``, so callers that compare
        against from-scratch evaluations need the same bits, not a value
        that is merely within rounding.
        """
        self.value = influence(self.model, self._members)
        return self.value

    def gain(self, slot: int) -> float:
        """Influence increase from adding ``slot``, without mutating."""
        idx, p = self.model.entries(int(slot))
        return float(np.sum(np.where(self._sure[idx] > 0, 0.0, self._prod[idx] * p)))

    def complement(self) -> np.ndarray:
        """Per-trajectory probability of *not* being reached (dense)."""
        return np.where(self._sure > 0, 0.0, self._prod)

    def leave_one_out(self, dense_rows: np.ndarray) -> np.ndarray:
        """Complement vectors with each given member row removed.

        ``dense_rows`` holds the probability rows (k x trajectories) of
        member slots; result row ``i`` is the complement of the set minus
        slot ``i``.
        """
        sure = dense_rows >= 1.0
        factor = np.where(sure | (dense_rows == 0.0), 1.0, 1.0 - dense_rows)
        remaining = self._sure[None, :] - sure
        return np.where(remaining > 0, 0.0, self._prod[None, :] / factor)
