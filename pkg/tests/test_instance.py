import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from billboard_regret.core import InfluenceModel, influence
from billboard_regret.errors import ConfigError, ParseError
from billboard_regret.instance import (
    BillboardRecord,
    CityParams,
    CostParams,
    Horizon,
    PruneStats,
    TrajectoryRecord,
    assign_costs,
    attach_influence,
    build_influence_model,
    build_instance,
    expand_slots,
    haversine_m,
    load_billboards,
    load_locations,
    load_trajectories,
    preprocess,
    random_model,
    synthetic_city,
    write_billboards,
    write_locations,
    write_trajectories,
)

DAY = Horizon(0, 86_400)


def truncate2(x):
    """Two-decimal truncation, the rounding used by the published percentages."""
    return math.floor(x * 100 + 1e-9) / 100


# ---------------------------------------------------------------- loading


def _write(path, text):
    path.write_text(text)
    return path


def test_load_three_rows(tmp_path):
    p = _write(tmp_path / "t.csv", "person_id,location_id,timestamp\nP1,L1,5\nP2,L1,10\nP3,L2,15\n")
    recs = load_trajectories(p, DAY)
    assert len(recs) == 3
    assert recs[0] == TrajectoryRecord("P1", "L1", 5)


def test_load_drops_out_of_horizon_with_warning(tmp_path, caplog):
    p = _write(tmp_path / "t.csv", "person_id,location_id,timestamp\nP1,L1,5\nP2,L1,99999\n")
    with caplog.at_level(logging.WARNING):
        recs = load_trajectories(p, DAY)
    assert len(recs) == 1
    assert "dropped 1 row" in caplog.text


def test_load_malformed_row_reports_line(tmp_path):
    p = _write(tmp_path / "t.csv", "person_id,location_id,timestamp\nP1,L1,5\nP2,L1,noon\n")
    with pytest.raises(ParseError) as err:
        load_trajectories(p, DAY)
    assert err.value.line == 3


def test_load_short_row(tmp_path):
    p = _write(tmp_path / "t.csv", "person_id,location_id,timestamp\nP1,L1\n")
    with pytest.raises(ParseError):
        load_trajectories(p)


def test_load_bad_header(tmp_path):
    p = _write(tmp_path / "t.csv", "who,where,when\nP1,L1,5\n")
    with pytest.raises(ParseError):
        load_trajectories(p)


def test_load_empty_file(tmp_path):
    assert load_trajectories(_write(tmp_path / "t.csv", "")) == []


def test_load_beach_sized_file(tmp_path):
    # [PAPER] the Beach trajectory table has 575 rows
    recs = [TrajectoryRecord(f"P{i}", f"L{i % 13}", i * 100) for i in range(575)]
    write_trajectories(tmp_path / "t.csv", recs)
    assert load_trajectories(tmp_path / "t.csv", DAY) == recs


def test_billboard_and_location_round_trip(tmp_path):
    boards = [BillboardRecord("B1", "L1", 50.0, 40.7, -73.9), BillboardRecord("B2", "L2", 12.5)]
    write_billboards(tmp_path / "b.csv", boards)
    assert load_billboards(tmp_path / "b.csv") == boards
    locs = {"L1": (40.7, -73.9), "L2": (40.71, -73.91)}
    write_locations(tmp_path / "l.csv", locs)
    assert load_locations(tmp_path / "l.csv") == locs


def test_billboard_bad_panel(tmp_path):
    p = _write(tmp_path / "b.csv", "billboard_id,location_id,panel_size,lat,lon\nB1,L1,0,,\n")
    with pytest.raises(ParseError):
        load_billboards(p)


# ---------------------------------------------------------------- slots


def test_expand_one_billboard_hourly():
    slots = expand_slots([BillboardRecord("B", "L", 1.0)], DAY, 3600)
    assert len(slots) == 24
    assert list(slots.start[:3]) == [0, 3600, 7200]
    assert np.all(slots.end - slots.start == 3600)


@pytest.mark.parametrize("boards, expected", [(76, 21_888), (86, 24_768), (671, 193_248)])
def test_expand_published_slot_counts(boards, expected):
    # [PAPER] dataset table: 288 five-minute slots per billboard per day
    recs = [BillboardRecord(f"B{i}", "L", 1.0) for i in range(boards)]
    assert len(expand_slots(recs, DAY, 300)) == expected


def test_expand_delta_longer_than_horizon():
    with pytest.raises(ConfigError):
        expand_slots([BillboardRecord("B", "L", 1.0)], Horizon(0, 100), 101)


def test_expand_tiles_without_overlap():
    slots = expand_slots([BillboardRecord("A", "L", 1.0), BillboardRecord("B", "L", 2.0)], DAY, 900)
    for b in (0, 1):
        rows = np.flatnonzero(slots.billboard == b)
        assert slots.start[rows[0]] == 0 and slots.end[rows[-1]] == 86_400
        assert np.all(slots.start[rows[1:]] == slots.end[rows[:-1]])


# ---------------------------------------------------------------- influence model


def test_panel_ratio_probabilities():
    # [DERIVED] panels 50 and 100 co-located with one trajectory point
    boards = [BillboardRecord("small", "L", 50.0), BillboardRecord("big", "L", 100.0)]
    slots = expand_slots(boards, Horizon(0, 100), 100)
    model = build_influence_model(slots, [TrajectoryRecord("P", "L", 10)], 100.0)
    assert model.entries(0)[1].tolist() == [0.5]
    assert model.entries(1)[1].tolist() == [1.0]


def test_unreached_location_contributes_nothing():
    boards = [BillboardRecord("B", "L1", 10.0)]
    slots = expand_slots(boards, Horizon(0, 100), 50)
    model = build_influence_model(slots, [TrajectoryRecord("P", "elsewhere", 10)], 100.0)
    assert model.indices.size == 0


def test_temporal_window_and_closing_instant():
    boards = [BillboardRecord("B", "L", 10.0)]
    slots = expand_slots(boards, Horizon(0, 100), 50)
    pts = [TrajectoryRecord("P", "L", 10), TrajectoryRecord("Q", "L", 60), TrajectoryRecord("R", "L", 100)]
    model = build_influence_model(slots, pts, 100.0)
    assert model.entries(0)[0].tolist() == [0]
    assert model.entries(1)[0].tolist() == [1, 2]
    every = build_influence_model(slots, pts, 100.0, match_all_slots=True)
    assert every.entries(0)[0].tolist() == [0, 1, 2]


def test_distance_matching():
    coords = {"near": (40.0, -73.0), "far": (40.01, -73.0)}  # ~1.1 km apart
    boards = [BillboardRecord("B", "near", 10.0, 40.0, -73.0005)]  # ~43 m from "near"
    slots = expand_slots(boards, Horizon(0, 100), 100)
    pts = [TrajectoryRecord("P", "near", 5), TrajectoryRecord("Q", "far", 5)]
    model = build_influence_model(slots, pts, 100.0, coords)
    assert model.entries(0)[0].tolist() == [0]
    wide = build_influence_model(slots, pts, 2_000.0, coords)
    assert wide.entries(0)[0].tolist() == [0, 1]


def test_haversine_known_distance():
    # one degree of latitude is about 111.2 km
    assert haversine_m(0.0, 0.0, 1.0, 0.0) == pytest.approx(111_195, rel=1e-3)


def test_nonpositive_lambda():
    slots = expand_slots([BillboardRecord("B", "L", 1.0)], Horizon(0, 10), 10)
    with pytest.raises(ConfigError):
        build_influence_model(slots, [], 0.0)


# ---------------------------------------------------------------- costs


def _slot_table_with(influences):
    rows = [[(t, 1.0) for t in range(n)] for n in influences]
    model = InfluenceModel.from_entries(rows, max(influences) if influences else 0)
    boards = [BillboardRecord("B", "L", 1.0)]
    slots = expand_slots(boards, Horizon(0, len(influences)), 1)
    return attach_influence(slots, model), model


def test_cost_formula():
    slots, model = _slot_table_with([0, 100, 55])
    costed = assign_costs(slots, model, CostParams(delta_range=(1.0, 1.0)))
    assert costed.cost.tolist() == [0, 10, 5]


def test_cost_deterministic_per_seed():
    slots, model = _slot_table_with([30, 70, 90, 120])
    a = assign_costs(slots, model, CostParams(seed=4))
    b = assign_costs(slots, model, CostParams(seed=4))
    assert np.array_equal(a.cost, b.cost)
    assert np.all(a.cost >= np.floor(0.9 * a.influence / 10))
    assert np.all(a.cost <= np.floor(1.1 * a.influence / 10))


# ---------------------------------------------------------------- preprocessing


def test_preprocess_identity_without_empty_slots():
    slots, model = _slot_table_with([1, 2, 3])
    s2, m2, stats = preprocess(slots, model)
    assert m2 is model and stats.removed == 0 and stats.removed_pct == 0.0


def test_preprocess_removes_only_empty_and_redensifies():
    model = InfluenceModel.from_entries([[], [(0, 0.5)], [], [(1, 1.0)]], 2)
    slots = attach_influence(expand_slots([BillboardRecord("B", "L", 1.0)], Horizon(0, 4), 1), model)
    s2, m2, stats = preprocess(slots, model)
    assert m2.slot_count == 2 and len(s2) == 2
    assert s2.start.tolist() == [1, 3]
    assert influence(m2, [0, 1]) == influence(model, range(4))
    assert (stats.before, stats.after, stats.removed) == (4, 2, 2)


@pytest.mark.parametrize(
    "boards, retained, before, pct",
    [(76, 455, 21_888, 97.92), (86, 938, 24_768, 96.21)],
)
def test_preprocess_published_rows(boards, retained, before, pct):
    # [PAPER] preprocessing table; one trajectory point lights each retained slot
    recs = [BillboardRecord(f"B{i}", f"L{i}", 10.0 + i) for i in range(boards)]
    slots = expand_slots(recs, DAY, 300)
    chosen = np.random.default_rng(0).choice(len(slots), size=retained, replace=False)
    pts = [TrajectoryRecord(f"P{j}", f"L{s // 288}", int(slots.start[s]) + 7)
           for j, s in enumerate(sorted(chosen.tolist()))]
    model = build_influence_model(slots, pts, 100.0)
    s2, m2, stats = preprocess(attach_influence(slots, model), model)
    assert (stats.before, stats.after) == (before, retained)
    assert truncate2(stats.removed_pct) == pct


@pytest.mark.parametrize(
    "before, after, pct",
    [(21_888, 455, 97.92), (24_768, 938, 96.21), (193_248, 2_949, 98.47), (90_144, 4_446, 95.06),
     (154_368, 8_749, 94.33)],
)
def test_prune_percentages(before, after, pct):
    # [PAPER] removed-percentage column of the preprocessing table
    assert truncate2(PruneStats(before, after).removed_pct) == pct


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 40), st.integers(1, 30))
def test_preprocess_keeps_full_set_influence(seed, n_slots, n_traj):
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_slots):
        hit = np.flatnonzero(rng.random(n_traj) < 0.2)
        rows.append([(int(t), float(rng.uniform(0.05, 1.0))) for t in hit])
    model = InfluenceModel.from_entries(rows, n_traj)
    slots = attach_influence(
        expand_slots([BillboardRecord("B", "L", 1.0)], Horizon(0, n_slots), 1), model)
    _, m2, stats = preprocess(slots, model)
    assert abs(influence(m2, range(m2.slot_count)) - influence(model, range(n_slots))) <= 1e-12
    assert stats.removed == int(np.sum(model.entry_counts() == 0))


# ---------------------------------------------------------------- pipeline


def test_build_instance_synthetic_city():
    boards, traj, coords = synthetic_city(CityParams(seed=3), DAY)
    inst = build_instance(boards, traj, DAY, 300, 100.0, coords)
    assert inst.prune.before == 12 * 288
    assert 0 < inst.model.slot_count == len(inst.slots) <= inst.prune.before
    assert np.all(inst.model.entry_counts() > 0)
    assert np.array_equal(inst.slots.influence, inst.model.individual_influence)
    assert inst.slots.probability.max() == 1.0


def test_synthetic_city_deterministic():
    a = synthetic_city(CityParams(seed=11), DAY)
    b = synthetic_city(CityParams(seed=11), DAY)
    assert a == b


def test_random_model_has_no_empty_slot():
    m = random_model(30, 5, density=0.01, seed=2)
    assert np.all(m.entry_counts() > 0)
