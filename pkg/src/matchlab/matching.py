"""Online matchers: two-choice, driver-optimal, greedy, and greedy-with-cutoff.

Each matcher is exposed two ways: a per-donation operation over an
AllocationState (the contract used by examples and tests), and a batch
replay core used by the experiment harness. The two paths make identical
decisions on identical streams; tests assert pointwise equality.

Tie rules are deterministic everywhere: two-choice prefers the origin-side
bank, everything else prefers the lowest food-bank node_id. No matcher
consumes randomness, so one donation stream replays identically across
algorithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geo import Catchment, Region
from .sampling import Donation, DonationStream

_CHUNK = 1 << 16


@dataclass
class AllocationState:
    """Cumulative value per food bank after t donations."""

    cum_value: dict[int, float]
    t: int = 0
    total_value: float = 0.0

    def add(self, foodbank: int, value: float) -> None:
        self.cum_value[foodbank] += value
        self.t += 1
        self.total_value += value


def fresh_state(catchment: Catchment) -> AllocationState:
    return AllocationState(cum_value={f: 0.0 for f in sorted(catchment.served_pop)})


@dataclass(frozen=True)
class MatchDecision:
    donation: Donation
    chosen: int
    travel: float
    optimal: float
    candidates: frozenset[int]


@dataclass(frozen=True)
class AlgoSpec:
    """Algorithm selection as it appears in harness configs."""

    algo: str
    load_mode: str = "normalized"
    c_miles: float = 0.0

    def __post_init__(self):
        if self.algo not in ("two_choice", "driver_optimal", "greedy", "greedy_cutoff"):
            raise ValidationError(f"unknown algorithm {self.algo!r}")
        if self.load_mode not in ("normalized", "raw"):
            raise ValidationError(f"unknown load_mode {self.load_mode!r}")
        if self.c_miles < 0 and not math.isinf(self.c_miles):
            raise ValidationError("c_miles must be >= 0")

    @property
    def label(self) -> str:
        if self.algo == "greedy_cutoff":
            c = "max" if math.isinf(self.c_miles) else f"{self.c_miles:g}"
            return f"greedy_cutoff_{c}"
        if self.algo == "two_choice" and self.load_mode == "raw":
            return "two_choice_raw"
        return self.algo

    @staticmethod
    def from_dict(d: dict) -> "AlgoSpec":
        known = {"algo", "load_mode", "c_miles"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown algorithm keys: {sorted(unknown)}")
        if "algo" not in d:
            raise ValidationError("algorithm entry missing 'algo'")
        c = d.get("c_miles", 0.0)
        if c == "max":
            c = math.inf
        return AlgoSpec(algo=d["algo"], load_mode=d.get("load_mode", "normalized"), c_miles=float(c))


def _route(region: Region, x: int, f: int, y: int) -> float:
    return region.d(x, f) + region.d(f, y)


def _optimal_route(region: Region, x: int, y: int) -> float:
    return min(_route(region, x, f, y) for f in region.foodbanks)


def _load(state: AllocationState, catchment: Catchment, f: int, normalized: bool) -> float:
    if normalized:
        return state.cum_value[f] / catchment.served_pop[f]
    return state.cum_value[f]


def match_two_choice(
    state: AllocationState,
    donation: Donation,
    region: Region,
    catchment: Catchment,
    load_mode: str = "normalized",
) -> MatchDecision:
    """Send the donation to the less-loaded of the banks nearest origin and destination.

    ``normalized`` compares w_f/N_f (the analyzed quantity); ``raw`` compares
    plain w_f. Load ties prefer the origin-side bank.
    """
    f_o = catchment.nearest[donation.origin]
    f_d = catchment.nearest[donation.destination]
    normalized = load_mode == "normalized"
    if _load(state, catchment, f_o, normalized) <= _load(state, catchment, f_d, normalized):
        chosen = f_o
    else:
        chosen = f_d
    decision = MatchDecision(
        donation=donation,
        chosen=chosen,
        travel=_route(region, donation.origin, chosen, donation.destination),
        optimal=_optimal_route(region, donation.origin, donation.destination),
        candidates=frozenset((f_o, f_d)),
    )
    state.add(chosen, donation.value)
    return decision


def match_driver_optimal(state: AllocationState, donation: Donation, region: Region) -> MatchDecision:
    """Route through a bank minimizing the driver's total distance; ties to lowest id."""
    best = None
    best_travel = math.inf
    for f in region.foodbanks:
        travel = _route(region, donation.origin, f, donation.destination)
        if travel < best_travel:
            best, best_travel = f, travel
    decision = MatchDecision(
        donation=donation,
        chosen=best,
        travel=best_travel,
        optimal=best_travel,
        candidates=frozenset(region.foodbanks),
    )
    state.add(best, donation.value)
    return decision


def match_greedy(
    state: AllocationState,
    donation: Donation,
    region: Region,
    catchment: Catchment,
) -> MatchDecision:
    """Send the donation to the bank with smallest normalized load, ignoring location."""
    banks = sorted(catchment.served_pop)
    chosen = min(banks, key=lambda f: state.cum_value[f] / catchment.served_pop[f])
    decision = MatchDecision(
        donation=donation,
        chosen=chosen,
        travel=_route(region, donation.origin, chosen, donation.destination),
        optimal=_optimal_route(region, donation.origin, donation.destination),
        candidates=frozenset(banks),
    )
    state.add(chosen, donation.value)
    return decision


def match_greedy_cutoff(
    state: AllocationState,
    donation: Donation,
    region: Region,
    catchment: Catchment,
    c: float,
) -> MatchDecision:
    """Least-normalized-load bank among those within c extra miles of the optimal route."""
    if c < 0 and not math.isinf(c):
        raise ValidationError("cutoff must be >= 0")
    banks = sorted(catchment.served_pop)
    routes = {f: _route(region, donation.origin, f, donation.destination) for f in banks}
    optimal = min(routes.values())
    eligible = [f for f in banks if routes[f] - optimal <= c]
    chosen = min(eligible, key=lambda f: state.cum_value[f] / catchment.served_pop[f])
    decision = MatchDecision(
        donation=donation,
        chosen=chosen,
        travel=routes[chosen],
        optimal=optimal,
        candidates=frozenset(eligible),
    )
    state.add(chosen, donation.value)
    return decision


@dataclass(frozen=True)
class StreamResult:
    """Replay output: per-donation choices and route lengths, plus bank order."""

    banks: tuple[int, ...]
    served_pop: np.ndarray
    chosen_idx: np.ndarray
    travel: np.ndarray
    optimal: np.ndarray
    values: np.ndarray

    @property
    def final_cum_value(self) -> np.ndarray:
        return np.bincount(self.chosen_idx, weights=self.values, minlength=len(self.banks))


@dataclass(frozen=True)
class _ReplayContext:
    """Precomputed index arrays shared by the batch cores."""

    region: Region
    catchment: Catchment
    banks: tuple[int, ...]
    fb_rows: np.ndarray
    served_pop: np.ndarray
    nearest_bank_pos: np.ndarray
    _id_order: np.ndarray = field(repr=False)
    _sorted_ids: np.ndarray = field(repr=False)

    def node_rows(self, node_ids: np.ndarray) -> np.ndarray:
        return self._id_order[np.searchsorted(self._sorted_ids, node_ids)]


def make_replay_context(region: Region, catchment: Catchment) -> _ReplayContext:
    banks = tuple(sorted(catchment.served_pop))
    fb_rows = region.foodbank_indices()
    served = np.array([catchment.served_pop[f] for f in banks], dtype=np.float64)
    empty = [f for f, n in zip(banks, served) if n <= 0]
    if empty:
        raise ValidationError(
            f"food banks {empty} serve zero food-insecure population; normalized loads undefined"
        )
    bank_pos = {f: k for k, f in enumerate(banks)}
    nearest = np.array(
        [bank_pos[catchment.nearest[nd.node_id]] for nd in region.nodes], dtype=np.int64
    )
    ids_arr = np.asarray(region.node_ids, dtype=np.int64)
    order = np.argsort(ids_arr, kind="stable")
    return _ReplayContext(
        region=region,
        catchment=catchment,
        banks=banks,
        fb_rows=fb_rows,
        served_pop=served,
        nearest_bank_pos=nearest,
        _id_order=order,
        _sorted_ids=ids_arr[order],
    )


def _travel_block(ctx: _ReplayContext, x_rows: np.ndarray, y_rows: np.ndarray) -> np.ndarray:
    d = ctx.region.dist
    return d[x_rows][:, ctx.fb_rows] + d[ctx.fb_rows][:, y_rows].T


def _two_choice_core(fo, fd, values, served, n_banks) -> np.ndarray:
    # loads[f] always equals cum[f]/served[f] recomputed after the last update,
    # the same float the per-donation op computes fresh; decisions match exactly
    m = len(values)
    cum = [0.0] * n_banks
    loads = [0.0] * n_banks
    fo_l, fd_l, val_l = fo.tolist(), fd.tolist(), values.tolist()
    out = [0] * m
    for t in range(m):
        a = fo_l[t]
        b = fd_l[t]
        c = a if loads[a] <= loads[b] else b
        cum[c] += val_l[t]
        loads[c] = cum[c] / served[c]
        out[t] = c
    return np.asarray(out, dtype=np.int64)


def _greedy_core(values, served, n_banks) -> np.ndarray:
    m = len(values)
    cum = [0.0] * n_banks
    loads = [0.0] * n_banks
    val_l = values.tolist()
    out = [0] * m
    idx = range(n_banks)
    get = loads.__getitem__
    for t in range(m):
        c = min(idx, key=get)
        cum[c] += val_l[t]
        loads[c] = cum[c] / served[c]
        out[t] = c
    return np.asarray(out, dtype=np.int64)


def replay_stream(
    spec: AlgoSpec,
    region: Region,
    catchment: Catchment,
    stream: DonationStream,
    ctx: _ReplayContext | None = None,
) -> StreamResult:
    """Run one algorithm over a full stream; decisions match the per-donation ops."""
    if ctx is None:
        ctx = make_replay_context(region, catchment)
    m = len(stream)
    x_rows = ctx.node_rows(stream.origins)
    y_rows = ctx.node_rows(stream.destinations)
    values = np.asarray(stream.values, dtype=np.float64)
    n_banks = len(ctx.banks)

    optimal = np.empty(m)
    if spec.algo == "driver_optimal":
        chosen_idx = np.empty(m, dtype=np.int64)
        for lo in range(0, m, _CHUNK):
            hi = min(lo + _CHUNK, m)
            block = _travel_block(ctx, x_rows[lo:hi], y_rows[lo:hi])
            chosen_idx[lo:hi] = np.argmin(block, axis=1)
            optimal[lo:hi] = block[np.arange(hi - lo), chosen_idx[lo:hi]]
    elif spec.algo == "two_choice":
        if spec.load_mode == "normalized":
            served = ctx.served_pop.tolist()
        else:
            served = [1.0] * n_banks
        fo = ctx.nearest_bank_pos[x_rows]
        fd = ctx.nearest_bank_pos[y_rows]
        chosen_idx = _two_choice_core(fo, fd, values, served, n_banks)
        for lo in range(0, m, _CHUNK):
            hi = min(lo + _CHUNK, m)
            optimal[lo:hi] = _travel_block(ctx, x_rows[lo:hi], y_rows[lo:hi]).min(axis=1)
    elif spec.algo == "greedy":
        chosen_idx = _greedy_core(values, ctx.served_pop.tolist(), n_banks)
        for lo in range(0, m, _CHUNK):
            hi = min(lo + _CHUNK, m)
            optimal[lo:hi] = _travel_block(ctx, x_rows[lo:hi], y_rows[lo:hi]).min(axis=1)
    elif spec.algo == "greedy_cutoff":
        cum = np.zeros(n_banks)
        loads = np.zeros(n_banks)
        chosen_idx = np.empty(m, dtype=np.int64)
        val_l = values.tolist()
        c = spec.c_miles
        for lo in range(0, m, _CHUNK):
            hi = min(lo + _CHUNK, m)
            block = _travel_block(ctx, x_rows[lo:hi], y_rows[lo:hi])
            opt_block = block.min(axis=1)
            optimal[lo:hi] = opt_block
            slack = block - opt_block[:, None]
            for r in range(hi - lo):
                masked = np.where(slack[r] <= c, loads, np.inf)
                k = int(np.argmin(masked))
                cum[k] += val_l[lo + r]
                loads[k] = cum[k] / ctx.served_pop[k]
                chosen_idx[lo + r] = k
    else:  # pragma: no cover - AlgoSpec rejects unknown algorithms
        raise ValidationError(f"unknown algorithm {spec.algo!r}")

    chosen_rows = ctx.fb_rows[chosen_idx]
    travel = ctx.region.dist[x_rows, chosen_rows] + ctx.region.dist[chosen_rows, y_rows]
    return StreamResult(
        banks=ctx.banks,
        served_pop=ctx.served_pop,
        chosen_idx=chosen_idx,
        travel=travel,
        optimal=optimal,
        values=values,
    )
