"""Trajectory/billboard ingestion, slot expansion and influence model building.

CSV schemas::

    trajectories.csv  person_id,location_id,timestamp   (epoch seconds)
    billboards.csv    billboard_id,location_id,panel_size,lat,lon
    locations.csv     location_id,lat,lon                (optional)

Each trajectory row is one trajectory point.  A billboard reaches a point
when it stands at the same location (or within ``lambda_m`` metres, when both
sides have coordinates) and the timestamp falls inside the slot window.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import InfluenceModel
from .errors import ConfigError, InputDomainError, ParseError

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8

TRAJECTORY_HEADER = ("person_id", "location_id", "timestamp")
BILLBOARD_HEADER = ("billboard_id", "location_id", "panel_size", "lat", "lon")
LOCATION_HEADER = ("location_id", "lat", "lon")


@dataclass(frozen=True)
class TrajectoryRecord:
    person_id: str
    location_id: str
    timestamp: int


@dataclass(frozen=True)
class BillboardRecord:
    billboard_id: str
    location_id: str
    panel_size: float
    lat: float | None = None
    lon: float | None = None

    def __post_init__(self):
        if not self.panel_size > 0:
            raise InputDomainError(f"billboard {self.billboard_id}: panel_size must be > 0")

    @property
    def has_coordinates(self) -> bool:
        return self.lat is not None and self.lon is not None


@dataclass(frozen=True)
class Horizon:
    start: int
    end: int

    def __post_init__(self):
        if self.end <= self.start:
            raise ConfigError(f"empty horizon [{self.start}, {self.end}]")

    @property
    def length(self) -> int:
        return self.end - self.start

    def __contains__(self, ts) -> bool:
        return self.start <= ts <= self.end


@dataclass(frozen=True)
class SlotTable:
    """Column-oriented slot table; row ``k`` is SlotId ``k``."""

    billboards: tuple[BillboardRecord, ...]
    billboard: np.ndarray  # index into ``billboards``
    start: np.ndarray
    end: np.ndarray
    probability: np.ndarray
    cost: np.ndarray
    influence: np.ndarray  # cached I({slot}); NaN until attached

    def __len__(self) -> int:
        return int(self.billboard.size)

    def billboard_id(self, slot: int) -> str:
        return self.billboards[int(self.billboard[slot])].billboard_id

    def take(self, rows: Sequence[int]) -> "SlotTable":
        rows = np.asarray(rows, dtype=np.int64)
        return SlotTable(
            self.billboards,
            self.billboard[rows],
            self.start[rows],
            self.end[rows],
            self.probability[rows],
            self.cost[rows],
            self.influence[rows],
        )

    def rows(self) -> Iterable[dict]:
        for k in range(len(self)):
            yield {
                "slot_id": k,
                "billboard_id": self.billboard_id(k),
                "start": int(self.start[k]),
                "end": int(self.end[k]),
                "probability": float(self.probability[k]),
                "cost": int(self.cost[k]),
                "influence": float(self.influence[k]),
            }


@dataclass(frozen=True)
class CostParams:
    delta_range: tuple[float, float] = (0.9, 1.1)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.delta_range
        if lo > hi:
            raise ConfigError("delta_range bounds out of order")


@dataclass(frozen=True)
class PruneStats:
    before: int
    after: int

    @property
    def removed(self) -> int:
        return self.before - self.after

    @property
    def removed_pct(self) -> float:
        return 100.0 * self.removed / self.before if self.before else 0.0


# ---------------------------------------------------------------- loading


def _reader(path):
    fh = open(path, newline="")
    return fh, csv.reader(fh)


def _check_header(path, header, expected, optional=()):
    got = tuple(h.strip() for h in header)
    need = tuple(h for h in expected if h not in optional)
    if got[: len(need)] != need:
        raise ParseError(path, 1, f"expected header {','.join(expected)}, got {','.join(got)}")
    return got


def _opt_float(value: str):
    value = value.strip()
    return float(value) if value else None


def load_trajectories(path, horizon: Horizon | None = None) -> list[TrajectoryRecord]:
    """Read trajectory points; rows outside ``horizon`` are dropped and counted."""
    fh, rows = _reader(path)
    with fh:
        header = next(rows, None)
        if header is None:
            return []
        _check_header(path, header, TRAJECTORY_HEADER)
        out = []
        dropped = 0
        for line, row in enumerate(rows, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise ParseError(path, line, f"expected 3 fields, got {len(row)}")
            pid, loc, ts = (c.strip() for c in row[:3])
            if not pid or not loc:
                raise ParseError(path, line, "empty person_id or location_id")
            try:
                ts = int(ts)
            except ValueError:
                raise ParseError(path, line, f"timestamp {ts!r} is not an integer") from None
            if horizon is not None and ts not in horizon:
                dropped += 1
                continue
            out.append(TrajectoryRecord(pid, loc, ts))
    if dropped:
        log.warning("%s: dropped %d row(s) outside the horizon", path, dropped)
    return out


def load_billboards(path) -> list[BillboardRecord]:
    fh, rows = _reader(path)
    with fh:
        header = next(rows, None)
        if header is None:
            return []
        _check_header(path, header, BILLBOARD_HEADER, optional=("lat", "lon"))
        out = []
        for line, row in enumerate(rows, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            row = row + [""] * (5 - len(row))
            try:
                out.append(
                    BillboardRecord(
                        row[0].strip(),
                        row[1].strip(),
                        float(row[2]),
                        _opt_float(row[3]),
                        _opt_float(row[4]),
                    )
                )
            except (ValueError, InputDomainError) as exc:
                raise ParseError(path, line, str(exc)) from None
    return out


def load_locations(path) -> dict[str, tuple[float, float]]:
    fh, rows = _reader(path)
    with fh:
        header = next(rows, None)
        if header is None:
            return {}
        _check_header(path, header, LOCATION_HEADER)
        out = {}
        for line, row in enumerate(rows, start=2):
            if not row:
                continue
            try:
                out[row[0].strip()] = (float(row[1]), float(row[2]))
            except (ValueError, IndexError):
                raise ParseError(path, line, "bad location row") from None
    return out


def write_trajectories(path, records: Iterable[TrajectoryRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for r in records:
            w.writerow((r.person_id, r.location_id, r.timestamp))


def write_billboards(path, records: Iterable[BillboardRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BILLBOARD_HEADER)
        for b in records:
            w.writerow(
                (
                    b.billboard_id,
                    b.location_id,
                    repr(float(b.panel_size)),
                    "" if b.lat is None else repr(float(b.lat)),
                    "" if b.lon is None else repr(float(b.lon)),
                )
            )


def write_locations(path, locations: Mapping[str, tuple[float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOCATION_HEADER)
        for loc, (lat, lon) in locations.items():
            w.writerow((loc, repr(float(lat)), repr(float(lon))))


# ---------------------------------------------------------------- slots


def slots_per_billboard(horizon: Horizon, delta: int) -> int:
    if delta <= 0:
        raise ConfigError("slot duration must be positive")
    if delta > horizon.length:
        raise ConfigError(
            f"slot duration {delta} exceeds the horizon length {horizon.length}"
        )
    if horizon.length % delta:
        log.warning(
            "slot duration %d does not divide the horizon length %d; tail dropped",
            delta,
            horizon.length,
        )
    return horizon.length // delta


def expand_slots(
    billboards: Sequence[BillboardRecord], horizon: Horizon, delta: int
) -> SlotTable:
    """Tile ``horizon`` into consecutive windows of ``delta`` per billboard.

    Slot ``b * K + k`` covers ``[T1 + k*delta, T1 + (k+1)*delta)`` on billboard
    ``b``, where ``K = floor((T2 - T1) / delta)``.
    """
    k = slots_per_billboard(horizon, delta)
    n = len(billboards)
    offsets = np.tile(np.arange(k, dtype=np.int64), n)
    start = horizon.start + offsets * delta
    billboard = np.repeat(np.arange(n, dtype=np.int64), k)
    if n:
        biggest = max(b.panel_size for b in billboards)
        prob = np.array([b.panel_size / biggest for b in billboards])[billboard]
    else:
        prob = np.zeros(0)
    return SlotTable(
        tuple(billboards),
        billboard,
        start,
        start + delta,
        prob,
        np.zeros(n * k, dtype=np.int64),
        np.full(n * k, np.nan),
    )


def haversine_m(lat1, lon1, lat2, lon2):
    """Great-circle distance in metres; broadcasts over numpy arrays."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def _reachable_locations(
    billboards: Sequence[BillboardRecord],
    location_ids: Sequence[str],
    coordinates: Mapping[str, tuple[float, float]] | None,
    lambda_m: float,
) -> list[list[int]]:
    """For each billboard, indices into ``location_ids`` it can reach."""
    pos = {loc: i for i, loc in enumerate(location_ids)}
    coords = coordinates or {}
    have = np.array([loc in coords for loc in location_ids], dtype=bool)
    lat = np.array([coords[l][0] if h else np.nan for l, h in zip(location_ids, have)])
    lon = np.array([coords[l][1] if h else np.nan for l, h in zip(location_ids, have)])
    out = []
    for b in billboards:
        if b.has_coordinates and have.any():
            near = np.zeros(len(location_ids), dtype=bool)
            near[have] = haversine_m(b.lat, b.lon, lat[have], lon[have]) <= lambda_m
            # points without coordinates still match by id
            if b.location_id in pos and not have[pos[b.location_id]]:
                near[pos[b.location_id]] = True
            out.append(np.flatnonzero(near).tolist())
        else:
            out.append([pos[b.location_id]] if b.location_id in pos else [])
    return out


def build_influence_model(
    slots: SlotTable,
    trajectories: Sequence[TrajectoryRecord],
    lambda_m: float,
    coordinates: Mapping[str, tuple[float, float]] | None = None,
    *,
    match_all_slots: bool = False,
) -> InfluenceModel:
    """Pr(slot, trajectory) = panel ratio of the slot's billboard, if it reaches it.

    With ``match_all_slots`` the time window is ignored and a reached point is
    credited to every slot of the billboard.
    """
    if not lambda_m > 0:
        raise ConfigError("lambda_m must be positive")
    n_slots = len(slots)
    n_boards = len(slots.billboards)
    if n_boards == 0 or not trajectories:
        return InfluenceModel(np.zeros(n_slots + 1, np.int64), [], [], len(trajectories))
    per_board = n_slots // n_boards
    t1 = int(slots.start[0])
    delta = int(slots.end[0] - slots.start[0])

    location_ids = sorted({t.location_id for t in trajectories})
    by_location: dict[int, list[int]] = {}
    loc_pos = {loc: i for i, loc in enumerate(location_ids)}
    for j, t in enumerate(trajectories):
        by_location.setdefault(loc_pos[t.location_id], []).append(j)
    stamps = np.array([t.timestamp for t in trajectories], dtype=np.int64)
    reach = _reachable_locations(slots.billboards, location_ids, coordinates, lambda_m)

    rows: list[list[int]] = [[] for _ in range(n_slots)]
    for b, locs in enumerate(reach):
        if not locs:
            continue
        pts = np.array(sorted(j for l in locs for j in by_location[l]), dtype=np.int64)
        base = b * per_board
        if match_all_slots:
            for k in range(per_board):
                rows[base + k] = pts.tolist()
            continue
        window = (stamps[pts] - t1) // delta
        window = np.where(window == per_board, per_board - 1, window)  # ts == T2
        ok = (window >= 0) & (window < per_board)
        for j, k in zip(pts[ok].tolist(), window[ok].tolist()):
            rows[base + k].append(j)

    indptr = np.zeros(n_slots + 1, dtype=np.int64)
    np.cumsum([len(r) for r in rows], out=indptr[1:])
    indices = np.fromiter((j for r in rows for j in r), dtype=np.int64, count=int(indptr[-1]))
    counts = np.diff(indptr)
    probs = np.repeat(slots.probability, counts)
    return InfluenceModel(indptr, indices, probs, len(trajectories))


def attach_influence(slots: SlotTable, model: InfluenceModel) -> SlotTable:
    if len(slots) != model.slot_count:
        raise InputDomainError("slot table and influence model differ in size")
    return replace(slots, influence=np.array(model.individual_influence))


def assign_costs(slots: SlotTable, model: InfluenceModel, params: CostParams) -> SlotTable:
    """cost = floor(delta * I({slot}) / 10), delta ~ U(delta_range) per slot."""
    if np.isnan(slots.influence).any():
        slots = attach_influence(slots, model)
    rng = np.random.default_rng(params.seed)
    delta = rng.uniform(*params.delta_range, size=len(slots))
    cost = np.floor(delta * slots.influence / 10.0).astype(np.int64)
    return replace(slots, cost=cost)


def preprocess(slots: SlotTable, model: InfluenceModel):
    """Drop slots that reach no trajectory; SlotIds are re-densified.

    Returns ``(slots, model, stats)``.
    """
    keep = np.flatnonzero(model.entry_counts() > 0)
    stats = PruneStats(model.slot_count, int(keep.size))
    if keep.size == model.slot_count:
        return slots, model, stats
    return slots.take(keep), model.select(keep), stats


@dataclass(frozen=True)
class Instance:
    slots: SlotTable
    model: InfluenceModel
    prune: PruneStats


def build_instance(
    billboards: Sequence[BillboardRecord],
    trajectories: Sequence[TrajectoryRecord],
    horizon: Horizon,
    delta: int,
    lambda_m: float,
    coordinates: Mapping[str, tuple[float, float]] | None = None,
    cost: CostParams = CostParams(),
    *,
    match_all_slots: bool = False,
) -> Instance:
    """Expansion, model building, costing and zero-influence pruning in one go."""
    slots = expand_slots(billboards, horizon, delta)
    model = build_influence_model(
        slots, trajectories, lambda_m, coordinates, match_all_slots=match_all_slots
    )
    slots = assign_costs(attach_influence(slots, model), model, cost)
    slots, model, stats = preprocess(slots, model)
    return Instance(slots, model, stats)


# ---------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class CityParams:
    """Shape of a synthetic city standing in for the proprietary datasets."""

    billboards: int = 12
    locations: int = 40
    rows: int = 500
    people: int = 150
    extent_m: float = 2000.0
    panel_range: tuple[float, float] = (20.0, 100.0)
    seed: int = 0
    center: tuple[float, float] = (40.75, -73.98)


def synthetic_city(params: CityParams, horizon: Horizon):
    """Random billboards, locations and trajectory points.

    Billboards sit near (within ~60 m of) a randomly chosen location so a
    100 m reach picks up that location and occasionally a neighbour.
    Returns ``(billboards, trajectories, coordinates)``.
    """
    rng = np.random.default_rng(params.seed)
    lat0, lon0 = params.center
    m_per_deg_lat = 111_320.0
    m_per_deg_lon = m_per_deg_lat * math.cos(math.radians(lat0))

    xy = rng.uniform(0, params.extent_m, size=(params.locations, 2))
    coords = {
        f"L{i:03d}": (float(lat0 + y / m_per_deg_lat), float(lon0 + x / m_per_deg_lon))
        for i, (x, y) in enumerate(xy)
    }
    loc_ids = list(coords)

    boards = []
    for b in range(params.billboards):
        home = int(rng.integers(params.locations))
        dx, dy = rng.uniform(-60, 60, size=2)
        x, y = xy[home] + (dx, dy)
        boards.append(
            BillboardRecord(
                f"B{b:03d}",
                loc_ids[home],
                float(np.round(rng.uniform(*params.panel_range), 1)),
                float(lat0 + y / m_per_deg_lat),
                float(lon0 + x / m_per_deg_lon),
            )
        )

    # popular places draw more visits
    weight = rng.pareto(1.5, size=params.locations) + 1.0
    weight /= weight.sum()
    visit_loc = rng.choice(params.locations, size=params.rows, p=weight)
    person = rng.integers(params.people, size=params.rows)
    stamp = rng.integers(horizon.start, horizon.end, size=params.rows)
    order = np.lexsort((person, stamp))
    trajectories = [
        TrajectoryRecord(f"P{int(person[i]):04d}", loc_ids[int(visit_loc[i])], int(stamp[i]))
        for i in order
    ]
    return boards, trajectories, coords


def random_model(
    n_slots: int,
    n_trajectories: int,
    density: float = 0.3,
    seed: int = 0,
    certain_fraction: float = 0.2,
) -> InfluenceModel:
    """Unstructured random model; every slot reaches at least one trajectory."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_slots):
        hit = np.flatnonzero(rng.random(n_trajectories) < density)
        if hit.size == 0:
            hit = np.array([rng.integers(n_trajectories)])
        p = np.where(
            rng.random(hit.size) < certain_fraction,
            1.0,
            np.round(rng.uniform(0.1, 0.95, size=hit.size), 3),
        )
        rows.append(list(zip(hit.tolist(), p.tolist())))
    return InfluenceModel.from_entries(rows, n_trajectories)
