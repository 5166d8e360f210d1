import math

import numpy as np
import pytest

from matchlab.errors import ValidationError
from matchlab.geo import compute_catchments, line_region
from matchlab.matching import AlgoSpec, AllocationState, fresh_state, replay_stream
from matchlab.metrics import (
    county_coverage,
    driver_stats,
    driver_stats_from_arrays,
    envy_trace_schedule,
    max_envy_from_loads,
    max_mult_envy,
    mean_envy_from_loads,
    mean_mult_envy,
    run_metrics,
)
from matchlab.sampling import make_proportional_dist, sample_stream, unit_weights


def state_with(catchment, values):
    state = fresh_state(catchment)
    for f, w in values.items():
        state.cum_value[f] = w
        state.total_value += w
    state.t = 1
    return state


@pytest.fixture
def three_banks():
    region = line_region([0.0, 1.0, 2.0], [0, 1, 2], fi_pop=[1, 1, 1])
    return region, compute_catchments(region)


def test_max_envy_uniform(three_banks):
    region, cat = three_banks
    assert max_mult_envy(state_with(cat, {0: 2, 1: 2, 2: 2}), cat) == 1.0


def test_max_envy_simple():
    region = line_region([0.0, 1.0], [0, 1], fi_pop=[1, 1])
    cat = compute_catchments(region)
    assert max_mult_envy(state_with(cat, {0: 3, 1: 1}), cat) == 3.0


def test_max_envy_infinite(three_banks):
    region, cat = three_banks
    assert max_mult_envy(state_with(cat, {0: 1, 1: 1, 2: 0}), cat) == math.inf


def test_mean_envy_values(three_banks):
    region, cat = three_banks
    assert mean_mult_envy(state_with(cat, {0: 5, 1: 5, 2: 5}), cat) == 1.0
    assert mean_envy_from_loads(np.array([4.0, 2.0])) == pytest.approx(1.5)
    assert mean_envy_from_loads(np.array([1.0, 1.0, 2.0])) == pytest.approx(5.0 / 3.0)


def test_envy_order_and_scaling():
    rng = np.random.Generator(np.random.Philox(2))
    for _ in range(50):
        v = rng.random(6) + 0.05
        mx, mn = max_envy_from_loads(v), mean_envy_from_loads(v)
        assert mx >= mn >= 1.0
        assert max_envy_from_loads(v * 37.5) == pytest.approx(mx, rel=1e-12)


def test_driver_stats_basics():
    assert driver_stats_from_arrays(np.array([5.0, 7.0]), np.array([5.0, 7.0])).max_reldist == 1.0
    ds = driver_stats_from_arrays(np.array([2.0, 6.0]), np.array([2.0, 2.0]))
    assert ds.max_reldist == 3.0 and ds.mean_reldist == 2.0
    # 0/0 routes count as ratio 1
    ds = driver_stats_from_arrays(np.array([0.0, 4.0]), np.array([0.0, 2.0]))
    assert ds.max_reldist == 2.0 and ds.mean_reldist == 1.5 and ds.infinite_ratios == 0


def test_driver_stats_infinite_counted_separately():
    ds = driver_stats_from_arrays(np.array([3.0, 4.0]), np.array([0.0, 2.0]))
    assert ds.infinite_ratios == 1
    assert ds.max_reldist == 2.0


def test_driver_stats_from_decisions(euclid_region):
    from matchlab.matching import match_driver_optimal
    from matchlab.sampling import Donation

    cat = compute_catchments(euclid_region)
    state = fresh_state(cat)
    decs = [match_driver_optimal(state, Donation(6, 9, 1.0), euclid_region) for _ in range(3)]
    ds = driver_stats(decs)
    assert ds.max_reldist == 1.0 and ds.mean_reldist == 1.0


def test_county_coverage_balanced(three_banks):
    region, cat = three_banks
    ratios = county_coverage(state_with(cat, {0: 2, 1: 2, 2: 2}), cat, region)
    assert all(r.ratio == pytest.approx(1.0) for r in ratios.values())


def test_county_coverage_skewed():
    region = line_region([0.0, 1.0], [0, 1], fi_pop=[1, 1])
    cat = compute_catchments(region)
    ratios = county_coverage(state_with(cat, {0: 2, 1: 0}), cat, region)
    assert ratios[0].ratio == pytest.approx(2.0)
    assert ratios[1].ratio == 0.0
    assert ratios[0].proportional_share == pytest.approx(1.0)


def test_county_coverage_requires_value(three_banks):
    region, cat = three_banks
    with pytest.raises(ValidationError):
        county_coverage(fresh_state(cat), cat, region)


def test_envy_trace_schedule():
    assert envy_trace_schedule(10, points=5) == [2, 4, 6, 8, 10]
    assert envy_trace_schedule(7, points=100) == [1, 2, 3, 4, 5, 6, 7]
    assert envy_trace_schedule(105, points=10)[-1] == 105


def test_greedy_ef1_bound():
    # unit donations, equal-weight banks: counts differ by at most one item
    region = line_region([0.0, 1.0, 2.0], [0, 1, 2], fi_pop=[3, 3, 3])
    cat = compute_catchments(region)
    dist = make_proportional_dist(region, "fi_pop")
    for m in (7, 30, 100):
        stream = sample_stream(dist, unit_weights(), m, seed=m)
        res = replay_stream(AlgoSpec("greedy"), region, cat, stream)
        rm = run_metrics(res, region, cat)
        bound = math.ceil(m / 3) / math.floor(m / 3)
        assert rm.max_menvy <= bound + 1e-12


def test_run_metrics_fig2_coverage(fig2_n50):
    # driver-optimal starves A's county: its coverage ratio is about 1/n
    region = fig2_n50
    cat = compute_catchments(region)
    dist = make_proportional_dist(region, "fi_pop")
    stream = sample_stream(dist, unit_weights(), 100_000, seed=31)
    res = replay_stream(AlgoSpec("driver_optimal"), region, cat, stream)
    rm = run_metrics(res, region, cat)
    v1 = 2  # node id of v_1, served by bank A
    assert rm.county_ratios[v1].foodbank_id == 0
    assert rm.county_ratios[v1].ratio == pytest.approx(1.0 / 50.0, rel=0.5)


def test_run_metrics_fig2_two_choice_worst_route(fig2_n50):
    # worst two-choice route costs (6 - delta/2)/2 = 2.975 at delta = 0.1
    region = fig2_n50
    cat = compute_catchments(region)
    dist = make_proportional_dist(region, "fi_pop")
    stream = sample_stream(dist, unit_weights(), 100_000, seed=32)
    res = replay_stream(AlgoSpec("two_choice"), region, cat, stream)
    rm = run_metrics(res, region, cat)
    assert 2.9 <= rm.max_reldist <= 3.0
    assert rm.max_reldist == pytest.approx(2.975, abs=1e-9)
