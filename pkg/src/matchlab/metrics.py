"""Fairness and efficiency statistics for completed (or in-progress) runs.

Multiplicative envy compares normalized loads v_f = w_f/N_f: the max
variant is (max v)/(min v), the smallest factor making the allocation
envy-free; the mean variant averages (max v)/(v_f) over banks. The mean
definition is a declared convention (it is >= 1, equals 1 exactly on
envy-free allocations, and never exceeds the max variant) and is recorded
in every results bundle.

A bank with zero load while another is served yields the +infinity
sentinel, serialized as the literal string "inf" in CSV output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .geo import Catchment, Region
from .matching import AllocationState, MatchDecision, StreamResult

ENVY_TRACE_POINTS = 1000


def _loads(state: AllocationState, catchment: Catchment) -> np.ndarray:
    banks = sorted(catchment.served_pop)
    if not banks:
        raise ValidationError("empty food bank set")
    return np.array([state.cum_value[f] / catchment.served_pop[f] for f in banks])


def max_envy_from_loads(v: np.ndarray) -> float:
    vmax = float(np.max(v))
    vmin = float(np.min(v))
    if vmin <= 0.0:
        return math.inf if vmax > 0.0 else 1.0
    return vmax / vmin


def mean_envy_from_loads(v: np.ndarray) -> float:
    vmax = float(np.max(v))
    if np.min(v) <= 0.0:
        return math.inf if vmax > 0.0 else 1.0
    return float(np.mean(vmax / v))


def max_mult_envy(state: AllocationState, catchment: Catchment) -> float:
    """Smallest eps such that the allocation is eps-multiplicatively envy-free."""
    return max_envy_from_loads(_loads(state, catchment))


def mean_mult_envy(state: AllocationState, catchment: Catchment) -> float:
    return mean_envy_from_loads(_loads(state, catchment))


@dataclass(frozen=True)
class DriverStats:
    max_reldist: float
    mean_reldist: float
    infinite_ratios: int


def driver_stats_from_arrays(travel: np.ndarray, optimal: np.ndarray) -> DriverStats:
    """Per-decision ratios travel/optimal; 0/0 counts as 1, positive/0 as infinite."""
    travel = np.asarray(travel, dtype=np.float64)
    optimal = np.asarray(optimal, dtype=np.float64)
    zero = optimal == 0.0
    infinite = int(np.count_nonzero(zero & (travel > 0.0)))
    ratios = np.where(zero, 1.0, travel / np.where(zero, 1.0, optimal))
    finite = ratios[~(zero & (travel > 0.0))]
    return DriverStats(
        max_reldist=float(np.max(finite)),
        mean_reldist=float(np.mean(finite)),
        infinite_ratios=infinite,
    )


def driver_stats(decisions: Iterable[MatchDecision]) -> DriverStats:
    ds = list(decisions)
    travel = np.array([d.travel for d in ds])
    optimal = np.array([d.optimal for d in ds])
    return driver_stats_from_arrays(travel, optimal)


@dataclass(frozen=True)
class CountyRatio:
    foodbank_id: int
    per_capita: float
    proportional_share: float
    ratio: float


def county_coverage(state: AllocationState, catchment: Catchment, region: Region) -> dict[int, CountyRatio]:
    """Per-county received-vs-proportional ratio (the choropleth data series).

    A county's residents receive the per-capita value of their nearest bank;
    the proportional share is what perfect proportionality would give every
    individual: total value / total food-insecure population.
    """
    if state.total_value <= 0:
        raise ValidationError("no value allocated yet")
    share = state.total_value / region.total_fi_pop
    out: dict[int, CountyRatio] = {}
    for nd in region.nodes:
        f = catchment.nearest[nd.node_id]
        per_capita = state.cum_value[f] / catchment.served_pop[f]
        out[nd.node_id] = CountyRatio(
            foodbank_id=f,
            per_capita=per_capita,
            proportional_share=share,
            ratio=per_capita / share,
        )
    return out


@dataclass(frozen=True)
class RunMetrics:
    max_menvy: float
    mean_menvy: float
    max_reldist: float
    mean_reldist: float
    infinite_ratios: int
    envy_trace: tuple[tuple[int, float], ...]
    county_ratios: dict[int, CountyRatio]


def envy_trace_schedule(m: int, points: int = ENVY_TRACE_POINTS) -> list[int]:
    """Sample times: every max(1, m // points) steps, always ending at m."""
    step = max(1, m // points)
    ts = list(range(step, m + 1, step))
    if ts[-1] != m:
        ts.append(m)
    return ts

def loads_over_time(
    chosen_idx: np.ndarray,
    values: np.ndarray,
    served_pop: np.ndarray,
    schedule: Sequence[int],
) -> np.ndarray:
    """Normalized loads v_f(t) at each scheduled t; rows follow the schedule."""
    n_banks = len(served_pop)
    w = np.zeros(n_banks)
    out = np.empty((len(schedule), n_banks))
    prev = 0
    for row, t in enumerate(schedule):
        w += np.bincount(chosen_idx[prev:t], weights=values[prev:t], minlength=n_banks)
        out[row] = w / served_pop
        prev = t
    return out


def run_metrics(
    result: StreamResult,
    region: Region,
    catchment: Catchment,
    trace_points: int = ENVY_TRACE_POINTS,
) -> RunMetrics:
    """All per-run statistics from one replayed stream."""
    m = len(result.values)
    schedule = envy_trace_schedule(m, trace_points)
    v_t = loads_over_time(result.chosen_idx, result.values, result.served_pop, schedule)
    trace = tuple((t, max_envy_from_loads(v_t[k])) for k, t in enumerate(schedule))
    v_final = v_t[-1]
    d = driver_stats_from_arrays(result.travel, result.optimal)

    total = float(result.values.sum())
    share = total / region.total_fi_pop
    bank_pos = {f: k for k, f in enumerate(result.banks)}
    ratios: dict[int, CountyRatio] = {}
    for nd in region.nodes:
        f = catchment.nearest[nd.node_id]
        per_capita = float(v_final[bank_pos[f]])
        ratios[nd.node_id] = CountyRatio(f, per_capita, share, per_capita / share)

    return RunMetrics(
        max_menvy=max_envy_from_loads(v_final),
        mean_menvy=mean_envy_from_loads(v_final),
        max_reldist=d.max_reldist,
        mean_reldist=d.mean_reldist,
        infinite_ratios=d.infinite_ratios,
        envy_trace=trace,
        county_ratios=ratios,
    )
