"""Weighted balls into weighted bins with biased two-choice sampling.

The process: n bins with positive integer weights N_i (total N), a bin
selection distribution that is (alpha, beta)-biased relative to those
weights, and i.i.d. ball weights. Each step samples two bins, and the ball
goes to the one with the smaller normalized load v_i = w_i/N_i. Gap(t) is
max v - min v.

A bin of weight N_i is treated as N_i unit slots for instrumentation: the
exponential potentials Phi/Psi/Gamma are computed over the slot vector
x_i(t) = v_i(t) - total(t)/N, and the per-slot selection probabilities
feed the rank-probability sandwich and the dominance experiment against
the (1+eps)-choice reference process on N unit bins.

Draw order is a contract: each step consumes [bin-choice, bin-choice,
value] uniforms (value omitted for unit balls), so a loop of single steps
over a shared generator reproduces ``run_process`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geo import BiasReport, bias_between, f_alpha_beta
from .sampling import WeightDistribution, stream_rng, tilted_weights_dist


@dataclass(frozen=True)
class BinsConfig:
    """n weighted bins, a selection distribution over them, and a ball-weight law."""

    weights: tuple[int, ...]
    selection_probs: np.ndarray
    wdist: WeightDistribution
    a: float = 0.05
    bias: BiasReport = field(init=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights)
        if len(w) == 0 or np.any(w <= 0) or not np.issubdtype(w.dtype, np.integer):
            raise ValidationError("bin weights must be positive integers")
        p = np.asarray(self.selection_probs, dtype=np.float64).copy()
        if abs(p.sum() - 1.0) > 1e-12 or np.any(p < 0):
            raise ValidationError("selection probabilities must be a distribution")
        if not (0 < self.a < 1):
            raise ValidationError("potential parameter a must be in (0, 1)")
        p.flags.writeable = False
        object.__setattr__(self, "selection_probs", p)
        object.__setattr__(self, "bias", bias_between(p, w.astype(np.float64)))
        cum = np.cumsum(p)
        cum.flags.writeable = False
        object.__setattr__(self, "_cum", cum)

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def total_weight(self) -> int:
        return int(sum(self.weights))

    def draw_bins(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._cum, u, side="right")
        return np.minimum(idx, self.n - 1)


def proportional_config(weights, wdist: WeightDistribution, a: float = 0.05) -> BinsConfig:
    w = np.asarray(weights, dtype=np.float64)
    return BinsConfig(tuple(int(x) for x in weights), w / w.sum(), wdist, a)


def tilted_config(weights, tilt: float, wdist: WeightDistribution, a: float = 0.05) -> BinsConfig:
    probs, _ = tilted_weights_dist(np.asarray(weights, dtype=np.float64), tilt)
    return BinsConfig(tuple(int(x) for x in weights), probs, wdist, a)


@dataclass
class BinsState:
    """Cumulative raw weight per bin; v = w/N_i are the compared loads."""

    w: np.ndarray
    t: int = 0
    total: float = 0.0

    @staticmethod
    def fresh(n: int) -> "BinsState":
        return BinsState(w=np.zeros(n))

    def loads(self, weights) -> np.ndarray:
        return self.w / np.asarray(weights, dtype=np.float64)

    def gap(self, weights) -> float:
        v = self.loads(weights)
        return float(v.max() - v.min())


@dataclass(frozen=True)
class GapTrace:
    samples: tuple[tuple[int, float], ...]

    def at(self, t: int) -> float:
        for s, g in self.samples:
            if s == t:
                return g
        raise KeyError(f"no sample at t={t}")

    @property
    def final(self) -> float:
        return self.samples[-1][1]


@dataclass(frozen=True)
class PotentialTrace:
    a: float
    samples: tuple[tuple[int, float, float, float], ...]  # (t, phi, psi, gamma)

    def gamma_at(self, t: int) -> float:
        for s, _, _, g in self.samples:
            if s == t:
                return g
        raise KeyError(f"no sample at t={t}")


def step_two_choice(state: BinsState, config: BinsConfig, rng: np.random.Generator) -> int:
    """One ball: sample two bins i.i.d., add the ball's weight to the lighter one.

    Load ties go to the first sampled bin. Returns the chosen bin.
    """
    u = rng.random(2)
    i, j = config.draw_bins(u)
    w = float(config.wdist.sample(rng, 1)[0]) if config.wdist.kind != "unit" else 1.0
    ni = config.weights
    chosen = int(i) if state.w[i] / ni[i] <= state.w[j] / ni[j] else int(j)
    state.w[chosen] += w
    state.t += 1
    state.total += w
    return chosen


def one_plus_eps_thresholds(n_bins: int, eps: float) -> np.ndarray:
    """Cumulative rank probabilities phi_i = (i/N)^(1+eps), i = 1..N."""
    if not (0 < eps <= 1):
        raise ValidationError("eps must be in (0, 1]")
    return (np.arange(1, n_bins + 1) / n_bins) ** (1.0 + eps)


def step_one_plus_eps(state: BinsState, eps: float, rng: np.random.Generator) -> int:
    """One ball of the reference process on unit bins.

    The ball lands in the i-th most loaded bin with probability
    phi_i - phi_{i-1}; a single uniform is inverted against the phi grid.
    Rank ties are broken by bin index (stable sort).
    """
    phis = one_plus_eps_thresholds(len(state.w), eps)
    u = rng.random()
    rank = int(np.searchsorted(phis, u, side="right"))
    order = np.argsort(-state.w, kind="stable")
    chosen = int(order[rank])
    state.w[chosen] += 1.0
    state.t += 1
    state.total += 1.0
    return chosen


@dataclass(frozen=True)
class SlotProbs:
    """Rank-ordered slot selection probabilities and their uniform reference."""

    p: np.ndarray
    psi: np.ndarray
    p_uniform: np.ndarray


def slot_probabilities(config: BinsConfig, state: BinsState) -> SlotProbs:
    """Probability of landing in the i-th most loaded slot's bin, for each rank i.

    Slots are ordered by bin normalized load descending, bin ties by index;
    each of a bin's N_i slots carries selection probability P(bin)/N_i.
    psi_i is the probability both sampled slots are among the i most loaded,
    so p_i = psi_i - psi_{i-1}; p_uniform is the unbiased (2i-1)/N^2.
    """
    weights = np.asarray(config.weights)
    v = state.loads(weights)
    order = np.lexsort((np.arange(config.n), -v))
    slot_probs = np.concatenate(
        [np.full(weights[b], config.selection_probs[b] / weights[b]) for b in order]
    )
    cum = np.cumsum(slot_probs)
    psi = cum**2
    p = np.diff(psi, prepend=0.0)
    total = config.total_weight
    ranks = np.arange(1, total + 1)
    return SlotProbs(p=p, psi=psi, p_uniform=(2.0 * ranks - 1.0) / total**2)


def default_schedule(m: int, points: int = 100) -> list[int]:
    step = max(1, m // points)
    ts = list(range(step, m + 1, step))
    if ts[-1] != m:
        ts.append(m)
    return ts


@dataclass(frozen=True)
class ProcessResult:
    gap: GapTrace
    potential: PotentialTrace
    final_w: np.ndarray
    total: float
    chebyshev_z: float
    max_center_residual: float


def _potentials(v: np.ndarray, weights: np.ndarray, total: float, n_slots: int, a: float):
    x = v - total / n_slots
    phi = float(np.sum(weights * np.exp(a * x)))
    psi = float(np.sum(weights * np.exp(-a * x)))
    residual = abs(float(np.sum(weights * x)))
    return phi, psi, residual


def run_process(
    config: BinsConfig,
    m: int,
    seed: int,
    sample_schedule: list[int] | None = None,
    one_choice: bool = False,
    run_index: int = 0,
) -> ProcessResult:
    """Run m steps, recording Gap and slot-level potentials at scheduled times.

    ``one_choice`` is the ablation: every ball goes to its single sampled
    bin. Deterministic per (seed, run_index); the two-choice path consumes
    uniforms in the exact order of repeated ``step_two_choice`` calls.
    """
    if m < 1:
        raise ValidationError("m must be >= 1")
    schedule = sorted(set(sample_schedule if sample_schedule is not None else default_schedule(m)))
    if schedule and (schedule[0] < 1 or schedule[-1] > m):
        raise ValidationError("sample schedule out of range")
    rng = stream_rng(seed, run_index)
    weights = np.asarray(config.weights, dtype=np.float64)
    inv = 1.0 / weights
    n_slots = config.total_weight
    unit = config.wdist.kind == "unit"
    per_step = (1 if one_choice else 2) + (0 if unit else 1)
    u = rng.random(m * per_step).reshape(m, per_step)

    if unit:
        wvals = np.ones(m)
    else:
        wvals = -config.wdist.mean * np.log1p(-u[:, -1])
    totals = np.cumsum(wvals)

    gap_samples: list[tuple[int, float]] = []
    pot_samples: list[tuple[int, float, float, float]] = []
    max_residual = 0.0

    def record(v: np.ndarray, t: int) -> None:
        nonlocal max_residual
        gap_samples.append((t, float(v.max() - v.min())))
        phi, psi, residual = _potentials(v, weights, totals[t - 1], n_slots, config.a)
        pot_samples.append((t, phi, psi, phi + psi))
        max_residual = max(max_residual, residual / max(1.0, totals[t - 1]))

    if one_choice:
        bins = config.draw_bins(u[:, 0])
        w_cum = np.zeros(config.n)
        prev = 0
        for t in schedule:
            w_cum += np.bincount(bins[prev:t], weights=wvals[prev:t], minlength=config.n)
            prev = t
            record(w_cum * inv, t)
        w_final = np.bincount(bins, weights=wvals, minlength=config.n)
    else:
        # v_l[i] is w_l[i]/N_i recomputed after the last update of bin i, the
        # same float a fresh division yields; a loop of step_two_choice over
        # one shared generator therefore reproduces these decisions exactly
        b1 = config.draw_bins(u[:, 0]).tolist()
        b2 = config.draw_bins(u[:, 1]).tolist()
        wv = wvals.tolist()
        n_l = weights.tolist()
        w_l = [0.0] * config.n
        v_l = [0.0] * config.n
        sched = schedule + [m + 1]
        next_idx = 0
        next_t = sched[0]
        for t in range(m):
            i = b1[t]
            j = b2[t]
            c = i if v_l[i] <= v_l[j] else j
            w_l[c] += wv[t]
            v_l[c] = w_l[c] / n_l[c]
            if t + 1 == next_t:
                record(np.asarray(v_l), t + 1)
                next_idx += 1
                next_t = sched[next_idx]
        w_final = np.asarray(w_l)

    total = float(totals[-1])
    var = config.wdist.variance
    if var == 0.0:
        z = 0.0 if abs(total - m * config.wdist.expected_value) < 1e-9 * max(1.0, total) else math.inf
    else:
        z = abs(total - m * config.wdist.expected_value) / math.sqrt(m * var)

    return ProcessResult(
        gap=GapTrace(tuple(gap_samples)),
        potential=PotentialTrace(config.a, tuple(pot_samples)),
        final_w=w_final,
        total=total,
        chebyshev_z=z,
        max_center_residual=max_residual,
    )


def check_majorization(
    x: np.ndarray,
    y: np.ndarray,
    require_equal_totals: bool = True,
    tol: float = 1e-9,
) -> bool:
    """True iff sorted-descending prefix sums of x dominate those of y.

    The full majorization relation also requires equal totals; pass
    ``require_equal_totals=False`` for the prefix-dominance diagnostic only.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValidationError(f"length mismatch: {x.shape} vs {y.shape}")
    px = np.cumsum(np.sort(x)[::-1])
    py = np.cumsum(np.sort(y)[::-1])
    if require_equal_totals and abs(px[-1] - py[-1]) > tol * max(1.0, abs(px[-1])):
        return False
    return bool(np.all(px >= py - tol))


def _simulate_slot_gaps(config: BinsConfig, m: int, runs: int, rng: np.random.Generator) -> np.ndarray:
    """Final Gap of the weighted two-choice process, vectorized across runs."""
    weights = np.asarray(config.weights, dtype=np.float64)
    inv = 1.0 / weights
    b1 = config.draw_bins(rng.random((runs, m)))
    b2 = config.draw_bins(rng.random((runs, m)))
    v = np.zeros((runs, config.n))
    rows = np.arange(runs)
    for t in range(m):
        i = b1[:, t]
        j = b2[:, t]
        take_i = v[rows, i] <= v[rows, j]
        c = np.where(take_i, i, j)
        v[rows, c] += inv[c]
    return v.max(axis=1) - v.min(axis=1)


def _simulate_one_plus_eps_gaps(n_bins: int, eps: float, m: int, runs: int, rng: np.random.Generator) -> np.ndarray:
    """Final Gap of the (1+eps)-choice process on unit bins, vectorized across runs."""
    phis = one_plus_eps_thresholds(n_bins, eps)
    lam = rng.random((runs, m))
    w = np.zeros((runs, n_bins))
    rows = np.arange(runs)
    for t in range(m):
        order = np.argsort(-w, axis=1, kind="stable")
        rank = np.searchsorted(phis, lam[:, t], side="right")
        chosen = order[rows, rank]
        w[rows, chosen] += 1.0
    return w.max(axis=1) - w.min(axis=1)


def dkw_band(n: int, delta: float) -> float:
    """One-sample Dvoretzky-Kiefer-Wolfowitz band at confidence 1 - delta."""
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


@dataclass(frozen=True)
class DominanceReport:
    eps: float
    alpha: float
    beta: float
    eps_bound: float
    certified: bool
    runs: int
    band: float
    max_violation: float
    dominated_within_band: bool
    mean_gap_slot: float
    mean_gap_one_plus_eps: float


def dominance_experiment(
    config: BinsConfig,
    eps: float,
    m: int,
    runs: int,
    seed: int,
    confidence: float = 0.999,
) -> DominanceReport:
    """Empirical check that the (1+eps)-choice gap stochastically dominates the process gap.

    Both processes run ``runs`` times with unit balls: the weighted
    two-choice process on ``config`` and the (1+eps)-choice process on
    N = total-weight unit bins. X dominates Y iff F_X <= F_Y pointwise;
    we report the largest signed ECDF excess max_a(F_X(a) - F_Y(a)) and
    compare it to the sum of the two one-sided DKW bands. The result is
    certified only when eps is within the bias condition
    eps <= f(alpha, beta) - 1 (and 0 < eps <= 1).
    """
    if config.wdist.kind != "unit":
        raise ValidationError("dominance experiment requires unit ball weights")
    bound = f_alpha_beta(config.bias.alpha, config.bias.beta) - 1.0
    eps_bound = min(1.0, bound)
    certified = 0 < eps <= eps_bound
    gaps_slot = _simulate_slot_gaps(config, m, runs, stream_rng(seed, 0))
    gaps_ref = _simulate_one_plus_eps_gaps(config.total_weight, eps, m, runs, stream_rng(seed, 1))

    xs = np.sort(gaps_ref)
    ys = np.sort(gaps_slot)
    grid = np.unique(np.concatenate([xs, ys]))
    f_x = np.searchsorted(xs, grid, side="right") / runs
    f_y = np.searchsorted(ys, grid, side="right") / runs
    max_violation = float(np.max(f_x - f_y))
    band = 2.0 * dkw_band(runs, (1.0 - confidence) / 2.0)

    return DominanceReport(
        eps=eps,
        alpha=config.bias.alpha,
        beta=config.bias.beta,
        eps_bound=eps_bound,
        certified=certified,
        runs=runs,
        band=band,
        max_violation=max_violation,
        dominated_within_band=max_violation <= band,
        mean_gap_slot=float(gaps_slot.mean()),
        mean_gap_one_plus_eps=float(gaps_ref.mean()),
    )
