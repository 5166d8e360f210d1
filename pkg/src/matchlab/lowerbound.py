"""Hard instance where driver efficiency and fairness are incompatible.

The construction: a bank node A hangs off populated node v_1 at distance
2 - delta/4, a bankless hub B sits between v_1 and the other populated
nodes v_2..v_n (all at distance 1 from B), and every v_i for i >= 2 hosts
a bank. Only A and B are unpopulated. Any near-driver-optimal matcher
routes through A only when origin and destination are both v_1, which
starves A's catchment down to a ~1/n share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geo import Node, Region, compute_catchments
from .matching import AlgoSpec, make_replay_context, replay_stream
from .metrics import run_metrics
from .sampling import make_proportional_dist, sample_stream, unit_weights

A_NODE_ID = 0
B_NODE_ID = 1


@dataclass(frozen=True)
class CounterexampleSpec:
    n: int
    delta: float = 0.1

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("need at least 2 populated nodes")
        if not (0 < self.delta < 4):
            raise ValidationError("delta must be in (0, 4)")


def build_counterexample(spec: CounterexampleSpec) -> Region:
    """Region with nodes A(id 0), B(id 1), v_1..v_n (ids 2..n+1); banks {A, v_2..v_n}."""
    n = spec.n
    size = n + 2
    inf = np.inf
    d = np.full((size, size), inf)
    np.fill_diagonal(d, 0.0)

    def edge(i: int, j: int, w: float) -> None:
        d[i, j] = d[j, i] = w

    def v(i: int) -> int:  # node_id of v_i, i in 1..n
        return 1 + i

    edge(A_NODE_ID, v(1), 2.0 - spec.delta / 4.0)
    edge(v(1), B_NODE_ID, 1.0)
    for i in range(2, n + 1):
        edge(B_NODE_ID, v(i), 1.0)
    for k in range(size):
        np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :], out=d)

    nodes = [Node(A_NODE_ID, "A", 0, 0), Node(B_NODE_ID, "B", 0, 0)]
    nodes += [Node(v(i), f"v{i}", 1, 1) for i in range(1, n + 1)]
    banks = (A_NODE_ID,) + tuple(v(i) for i in range(2, n + 1))
    return Region(nodes=tuple(nodes), foodbanks=banks, dist=d)


@dataclass(frozen=True)
class TradeoffRunRow:
    algorithm: str
    run: int
    deliveries_to_a: int
    max_menvy: float
    max_reldist: float


@dataclass(frozen=True)
class TradeoffReport:
    spec: CounterexampleSpec
    m: int
    runs: int
    rows: tuple[TradeoffRunRow, ...]

    def per_algorithm(self, algorithm: str) -> list[TradeoffRunRow]:
        return [r for r in self.rows if r.algorithm == algorithm]

    def mean_deliveries_to_a(self, algorithm: str) -> float:
        rows = self.per_algorithm(algorithm)
        return sum(r.deliveries_to_a for r in rows) / len(rows)

    def mean_max_menvy(self, algorithm: str) -> float:
        rows = self.per_algorithm(algorithm)
        return sum(r.max_menvy for r in rows) / len(rows)

    def mean_max_reldist(self, algorithm: str) -> float:
        rows = self.per_algorithm(algorithm)
        return sum(r.max_reldist for r in rows) / len(rows)


def tradeoff_experiment(spec: CounterexampleSpec, m: int, runs: int, seed: int) -> TradeoffReport:
    """Driver-optimal vs two-choice on the hard instance, unit (1,1)-biased donations."""
    if m < spec.n**2:
        raise ValidationError("m must be at least n^2 for the starvation effect to show")
    region = build_counterexample(spec)
    catchment = compute_catchments(region)
    ctx = make_replay_context(region, catchment)
    dist = make_proportional_dist(region, "fi_pop")
    wdist = unit_weights()
    a_pos = ctx.banks.index(A_NODE_ID)

    specs = [AlgoSpec("driver_optimal"), AlgoSpec("two_choice")]
    rows: list[TradeoffRunRow] = []
    for run in range(runs):
        stream = sample_stream(dist, wdist, m, seed, run_index=run)
        for algo in specs:
            result = replay_stream(algo, region, catchment, stream, ctx)
            rm = run_metrics(result, region, catchment, trace_points=1)
            rows.append(
                TradeoffRunRow(
                    algorithm=algo.label,
                    run=run,
                    deliveries_to_a=int(np.count_nonzero(result.chosen_idx == a_pos)),
                    max_menvy=rm.max_menvy,
                    max_reldist=rm.max_reldist,
                )
            )
    return TradeoffReport(spec=spec, m=m, runs=runs, rows=tuple(rows))
