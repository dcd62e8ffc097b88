import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from billboard_regret.core import Advertiser, InfluenceModel  # noqa: E402

WORKED_INFLUENCE = (4, 6, 5, 7, 3, 2, 3, 2, 3, 3)
WORKED_ADVERTISERS = ((7, 12), (9, 14), (10, 15))


def disjoint_model(sizes, prob=1.0):
    """Slot k covers ``sizes[k]`` private trajectories with probability ``prob``."""
    rows, t = [], 0
    for size in sizes:
        rows.append([(t + j, prob) for j in range(size)])
        t += size
    return InfluenceModel.from_entries(rows, t)


@pytest.fixture
def worked():
    model = disjoint_model(WORKED_INFLUENCE)
    advs = [Advertiser(i, float(d), float(u)) for i, (d, u) in enumerate(WORKED_ADVERTISERS)]
    return model, advs


@st.composite
def models(draw, max_slots=8, max_traj=10, min_slots=0):
    n_slots = draw(st.integers(min_slots, max_slots))
    n_traj = draw(st.integers(1, max_traj))
    probs = st.one_of(st.just(1.0), st.floats(0.05, 0.99))
    rows = []
    for _ in range(n_slots):
        hit = draw(st.sets(st.integers(0, n_traj - 1), max_size=n_traj))
        rows.append([(t, draw(probs)) for t in sorted(hit)])
    return InfluenceModel.from_entries(rows, n_traj)


@st.composite
def advertiser_lists(draw, max_n=3, max_demand=8.0):
    n = draw(st.integers(1, max_n))
    return [
        Advertiser(i, draw(st.floats(0.25, max_demand)), draw(st.floats(0.5, 10.0)))
        for i in range(n)
    ]


def rng_model(seed, n_slots, n_traj, density=0.3):
    from billboard_regret.instance import random_model

    return random_model(n_slots, n_traj, density=density, seed=seed)


def as_array(x):
    return np.asarray(x, dtype=float)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
