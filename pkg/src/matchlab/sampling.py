"""Donation stream generation: node distributions, weight distributions, PRNG.

Streams are bit-reproducible: one Philox generator per run, keyed by
hashing (base_seed, run_index) through numpy's SeedSequence, node draws by
inverse CDF on the cumulative probability vector, and exponential values by
-mean*ln(1-U). The generator name is recorded in experiment metadata.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geo import BiasReport, Region, bias_between

PRNG_NAME = "numpy.random.Philox(SeedSequence((base_seed, run_index)))"


def stream_rng(base_seed: int, run_index: int = 0) -> np.random.Generator:
    """Private generator for one run; distinct runs never share state."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((base_seed, run_index))))


@dataclass(frozen=True)
class NodeDistribution:
    """Probability distribution over node_ids with its bias against fi_pop."""

    ids: tuple[int, ...]
    probs: np.ndarray
    bias: BiasReport
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if np.any(p < 0):
            raise ValidationError("negative probability")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError(f"probabilities sum to {p.sum()!r}, not 1")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)
        cum = np.cumsum(p)
        cum.flags.writeable = False
        object.__setattr__(self, "_cum", cum)

    def draw_indices(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-CDF draws; returns positions into ``ids``."""
        u = rng.random(size)
        idx = np.searchsorted(self._cum, u, side="right")
        return np.minimum(idx, len(self.ids) - 1)


@dataclass(frozen=True)
class WeightDistribution:
    """Donation value distribution: unit, exponential(mean), or normalized-exponential."""

    kind: str
    mean: float = 1.0

    def __post_init__(self):
        if self.kind not in ("unit", "exponential", "normalized-exponential"):
            raise ValidationError(f"unknown weight distribution kind {self.kind!r}")
        if self.kind == "unit" and self.mean != 1.0:
            raise ValidationError("unit weights have mean 1 by definition")
        if self.kind == "normalized-exponential" and self.mean != 1.0:
            raise ValidationError("normalized-exponential has mean 1 by definition")
        if self.mean <= 0:
            raise ValidationError("mean must be positive")

    @property
    def expected_value(self) -> float:
        return self.mean

    @property
    def variance(self) -> float:
        return 0.0 if self.kind == "unit" else self.mean**2

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "unit":
            return np.ones(size)
        return -self.mean * np.log1p(-rng.random(size))


def unit_weights() -> WeightDistribution:
    return WeightDistribution("unit")


def exponential_weights(mean: float) -> WeightDistribution:
    return WeightDistribution("exponential", mean)


def normalized_exponential_weights() -> WeightDistribution:
    return WeightDistribution("normalized-exponential", 1.0)


@dataclass(frozen=True)
class Donation:
    origin: int
    destination: int
    value: float


@dataclass(frozen=True)
class DonationStream:
    """A sequence of m donations, stored as parallel arrays for fast replay."""

    origins: np.ndarray
    destinations: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, t: int) -> Donation:
        return Donation(int(self.origins[t]), int(self.destinations[t]), float(self.values[t]))

    def __iter__(self):
        for t in range(len(self)):
            yield self[t]

    @property
    def total_value(self) -> float:
        return float(self.values.sum())

    def sha256(self) -> str:
        h = hashlib.sha256()
        h.update(self.origins.astype("<i8").tobytes())
        h.update(self.destinations.astype("<i8").tobytes())
        h.update(self.values.astype("<f8").tobytes())
        return h.hexdigest()


def make_proportional_dist(region: Region, pop_field: str) -> NodeDistribution:
    """Node probabilities proportional to the chosen population field."""
    if pop_field not in ("fi_pop", "total_pop"):
        raise ValidationError(f"unknown population field {pop_field!r}")
    w = np.array([getattr(nd, pop_field) for nd in region.nodes], dtype=np.float64)
    if w.sum() <= 0:
        raise ValidationError(f"field {pop_field} sums to zero")
    probs = w / w.sum()
    fi = np.array([nd.fi_pop for nd in region.nodes], dtype=np.float64)
    return NodeDistribution(ids=region.node_ids, probs=probs, bias=bias_between(probs, fi))


def make_tilted_dist(region: Region, tilt: float) -> NodeDistribution:
    """Probabilities proportional to fi_pop**(1+tilt); tilt=0 is proportional.

    Used to sweep the bias constants in stress experiments.
    """
    if not np.isfinite(tilt):
        raise ValidationError("tilt must be finite")
    fi = np.array([nd.fi_pop for nd in region.nodes], dtype=np.float64)
    if fi.sum() <= 0:
        raise ValidationError("fi_pop sums to zero")
    w = fi ** (1.0 + tilt)
    probs = w / w.sum()
    return NodeDistribution(ids=region.node_ids, probs=probs, bias=bias_between(probs, fi))


def tilted_weights_dist(weights: np.ndarray, tilt: float) -> tuple[np.ndarray, BiasReport]:
    """Tilted probabilities over arbitrary positive weights (bins, not counties)."""
    w = np.asarray(weights, dtype=np.float64)
    p = w ** (1.0 + tilt)
    p = p / p.sum()
    return p, bias_between(p, w)


def tilt_for_bias(
    weights: np.ndarray,
    alpha_max: float = math.inf,
    beta_max: float = math.inf,
    hi: float = 4.0,
) -> float:
    """Largest tilt (by bisection) keeping the tilted bias within both bounds.

    Both alpha and beta grow monotonically with the tilt, so bisection on
    the joint predicate is exact up to the iteration tolerance.
    """
    if alpha_max < 1.0 or beta_max < 1.0:
        raise ValueError("bias bounds below 1 are unattainable")
    lo = 0.0
    for _ in range(80):
        mid = (lo + hi) / 2.0
        _, bias = tilted_weights_dist(weights, mid)
        if bias.alpha <= alpha_max and bias.beta <= beta_max:
            lo = mid
        else:
            hi = mid
    return lo


def tilt_for_beta(weights: np.ndarray, beta_target: float, hi: float = 4.0) -> float:
    """Largest tilt (by bisection) whose tilted distribution has beta <= target."""
    return tilt_for_bias(weights, beta_max=beta_target, hi=hi)


def sample_stream(
    dist: NodeDistribution,
    wdist: WeightDistribution,
    m: int,
    seed: int,
    run_index: int = 0,
) -> DonationStream:
    """Sample m donations i.i.d.: origins, then destinations, then values.

    Block order is the format contract: identical (dist, wdist, m, seed,
    run_index) reproduces the stream byte for byte, and streams that differ
    only in the value distribution share the same node draws.
    """
    if m < 1:
        raise ValidationError("m must be >= 1")
    rng = stream_rng(seed, run_index)
    ids = np.asarray(dist.ids, dtype=np.int64)
    origins = ids[dist.draw_indices(rng, m)]
    destinations = ids[dist.draw_indices(rng, m)]
    values = wdist.sample(rng, m)
    return DonationStream(origins=origins, destinations=destinations, values=values)
