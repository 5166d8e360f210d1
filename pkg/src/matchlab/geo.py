"""County graph, metric validation, catchments, and bias estimation.

A region is a complete metric over county nodes (distances in miles),
with a food-insecure and a total population per node and a subset of
nodes hosting food banks. Every individual is served by the nearest
food bank; the per-bank served populations drive all fairness metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnboundedBiasError, ValidationError

TRIANGLE_RTOL = 1e-9


@dataclass(frozen=True)
class Node:
    node_id: int
    name: str
    fi_pop: int
    total_pop: int


@dataclass(frozen=True)
class Region:
    """Immutable county graph with a dense symmetric distance matrix.

    ``dist[i, j]`` is the distance between ``nodes[i]`` and ``nodes[j]``;
    matrix rows follow the order of ``nodes``. ``foodbanks`` is a sorted
    tuple of node_ids hosting a food bank.
    """

    nodes: tuple[Node, ...]
    foodbanks: tuple[int, ...]
    dist: np.ndarray
    repaired: bool = False
    _index: dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = [nd.node_id for nd in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate node_ids in region")
        object.__setattr__(self, "foodbanks", tuple(sorted(self.foodbanks)))
        object.__setattr__(self, "_index", {nid: k for k, nid in enumerate(ids)})
        d = np.asarray(self.dist, dtype=np.float64)
        if d.shape != (len(ids), len(ids)):
            raise ValidationError(f"distance matrix shape {d.shape} does not match {len(ids)} nodes")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "dist", d)

    @property
    def node_ids(self) -> tuple[int, ...]:
        return tuple(nd.node_id for nd in self.nodes)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def total_fi_pop(self) -> int:
        return sum(nd.fi_pop for nd in self.nodes)

    def index_of(self, node_id: int) -> int:
        return self._index[node_id]

    def d(self, u: int, v: int) -> float:
        return float(self.dist[self._index[u], self._index[v]])

    def foodbank_indices(self) -> np.ndarray:
        """Row indices of the food-bank nodes, in ascending node_id order."""
        return np.array([self._index[f] for f in self.foodbanks], dtype=np.int64)


@dataclass(frozen=True)
class Catchment:
    """Nearest-food-bank assignment and per-bank served populations."""

    nearest: dict[int, int]
    served_pop: dict[int, int]
    served_set: dict[int, frozenset[int]]


@dataclass
class ValidationReport:
    ok: bool
    errors: list[str]
    asymmetric_cells: list[tuple[int, int]]
    negative_cells: list[tuple[int, int]]
    nonzero_diagonal: list[int]
    triangle_violations: list[tuple[int, int, int]]


def validate_region(region: Region, max_reported: int = 20) -> ValidationReport:
    """Check the metric assumptions; a failing region must not be used downstream."""
    d = region.dist
    ids = region.node_ids
    errors: list[str] = []

    if len(region.foodbanks) == 0:
        errors.append("no food banks")
    unknown = [f for f in region.foodbanks if f not in region._index]
    if unknown:
        errors.append(f"food banks not in node set: {unknown}")
    if region.total_fi_pop <= 0:
        errors.append("total food-insecure population is zero")

    asym = np.argwhere(np.abs(d - d.T) > 0)
    asymmetric = [(ids[i], ids[j]) for i, j in asym[:max_reported] if i < j]
    if asymmetric:
        errors.append(f"asymmetric distance cells: {asymmetric}")

    neg = np.argwhere(d < 0)
    negative = [(ids[i], ids[j]) for i, j in neg[:max_reported]]
    if negative:
        errors.append(f"negative distances: {negative}")

    diag = np.flatnonzero(np.diag(d) != 0)
    nonzero_diag = [ids[i] for i in diag[:max_reported]]
    if nonzero_diag:
        errors.append(f"nonzero diagonal at nodes: {nonzero_diag}")

    triangles: list[tuple[int, int, int]] = []
    if not asymmetric and not negative:
        tol = TRIANGLE_RTOL * np.maximum(d, 1.0)
        for k in range(region.n):
            excess = d - (d[:, k : k + 1] + d[k : k + 1, :]) - tol
            bad = np.argwhere(excess > 0)
            for i, j in bad:
                triangles.append((ids[i], ids[k], ids[j]))
                if len(triangles) >= max_reported:
                    break
            if len(triangles) >= max_reported:
                break
        if triangles:
            errors.append(f"triangle inequality violated on triples (u,via,w): {triangles}")

    return ValidationReport(
        ok=not errors,
        errors=errors,
        asymmetric_cells=asymmetric,
        negative_cells=negative,
        nonzero_diagonal=nonzero_diag,
        triangle_violations=triangles,
    )


def repair_metric(region: Region) -> Region:
    """Replace distances by their all-pairs shortest-path closure (Floyd-Warshall).

    The result is a metric whenever the input is symmetric and nonnegative;
    the returned region carries ``repaired=True`` so output metadata can
    record the repair.
    """
    d = region.dist.copy()
    for k in range(region.n):
        np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :], out=d)
    return Region(nodes=region.nodes, foodbanks=region.foodbanks, dist=d, repaired=True)


def compute_catchments(region: Region) -> Catchment:
    """Map every node to its minimum-distance food bank.

    Ties go to the lowest food-bank node_id, so repeated calls are
    deterministic and replayed traces are stable.
    """
    report = validate_region(region)
    if not report.ok:
        raise ValidationError("; ".join(report.errors))
    fb_idx = region.foodbank_indices()
    sub = region.dist[:, fb_idx]
    # foodbanks are sorted ascending, argmin takes the first minimum: lowest id wins
    choice = np.argmin(sub, axis=1)
    nearest = {nd.node_id: region.foodbanks[choice[k]] for k, nd in enumerate(region.nodes)}
    served_pop = {f: 0 for f in region.foodbanks}
    served_set: dict[int, set[int]] = {f: set() for f in region.foodbanks}
    for nd in region.nodes:
        f = nearest[nd.node_id]
        served_pop[f] += nd.fi_pop
        served_set[f].add(nd.node_id)
    return Catchment(
        nearest=nearest,
        served_pop=served_pop,
        served_set={f: frozenset(s) for f, s in served_set.items()},
    )


@dataclass(frozen=True)
class BiasReport:
    alpha: float
    beta: float


def bias_between(probs: np.ndarray, weights: np.ndarray) -> BiasReport:
    """Tightest (alpha, beta) such that weight_i/(alpha*W) <= probs_i <= beta*weight_i/W.

    Entries with zero weight must have zero probability, otherwise beta is
    unbounded; zero-probability entries with positive weight make alpha
    unbounded.
    """
    probs = np.asarray(probs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if total <= 0:
        raise UnboundedBiasError("all reference weights are zero")
    target = weights / total
    pos = target > 0
    if np.any(probs[~pos] > 0):
        raise UnboundedBiasError("probability mass on zero-weight entries (beta unbounded)")
    if np.any((probs[pos] == 0) & (target[pos] > 0)):
        raise UnboundedBiasError("zero probability on positive-weight entries (alpha unbounded)")
    alpha = float(np.max(target[pos] / probs[pos]))
    beta = float(np.max(probs[pos] / target[pos]))
    return BiasReport(alpha=max(alpha, 1.0), beta=max(beta, 1.0))


def estimate_alpha_beta(region: Region, catchment: Catchment) -> BiasReport:
    """Bias of food-insecure-proportional bank selection against actual population.

    q_f is the probability a bank's catchment is hit when sampling counties
    proportionally to food-insecure population; r_f is the bank's share of
    actual population. Returns the tightest constants with r_f/alpha <= q_f
    <= beta*r_f for every bank.
    """
    banks = sorted(catchment.served_pop)
    fi = np.array([catchment.served_pop[f] for f in banks], dtype=np.float64)
    by_id = {nd.node_id: nd for nd in region.nodes}
    pop = np.array(
        [sum(by_id[v].total_pop for v in catchment.served_set[f]) for f in banks],
        dtype=np.float64,
    )
    if fi.sum() <= 0 or pop.sum() <= 0:
        raise UnboundedBiasError("a population field sums to zero")
    q = fi / fi.sum()
    r = pop / pop.sum()
    bad_alpha = [banks[k] for k in np.flatnonzero((q == 0) & (r > 0))]
    if bad_alpha:
        raise UnboundedBiasError(f"alpha unbounded: banks with population but no FI population: {bad_alpha}")
    bad_beta = [banks[k] for k in np.flatnonzero((r == 0) & (q > 0))]
    if bad_beta:
        raise UnboundedBiasError(f"beta unbounded: banks with FI population but no population: {bad_beta}")
    keep = q > 0
    alpha = float(np.max(r[keep] / q[keep]))
    beta = float(np.max(q[keep] / r[keep]))
    return BiasReport(alpha=max(alpha, 1.0), beta=max(beta, 1.0))


def f_alpha_beta(alpha: float, beta: float) -> float:
    """Bias-tolerance expression 2*ln((ab-1)/(ab-b)) / ln((ab-1)/(a-1)).

    Returns +inf when either bound is exactly 1: a distribution that is
    (1,b)- or (a,1)-biased is forced to be exactly proportional (both sides
    sum to one), so no bias constrains the process.
    """
    if not (alpha >= 1.0 and beta >= 1.0):
        raise ValueError(f"alpha and beta must be >= 1, got ({alpha}, {beta})")
    if alpha == 1.0 or beta == 1.0:
        return math.inf
    num = 2.0 * math.log((alpha * beta - 1.0) / (alpha * beta - beta))
    den = math.log((alpha * beta - 1.0) / (alpha - 1.0))
    return num / den


def load_region(counties_csv, foodbanks_csv, distances_csv) -> Region:
    """Load a region from the three-file CSV contract.

    counties.csv: header ``node_id,name,fi_pop,total_pop``.
    foodbanks.csv: header ``node_id``.
    distances.csv: first row and column are node_ids, cells are miles.
    """
    import csv

    with open(counties_csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"node_id", "name", "fi_pop", "total_pop"}:
        raise ValidationError(f"{counties_csv}: expected header node_id,name,fi_pop,total_pop")
    nodes = tuple(
        Node(int(r["node_id"]), r["name"], int(r["fi_pop"]), int(r["total_pop"])) for r in rows
    )

    with open(foodbanks_csv, newline="", encoding="utf-8") as fh:
        fb_rows = list(csv.DictReader(fh))
    if not fb_rows or set(fb_rows[0]) != {"node_id"}:
        raise ValidationError(f"{foodbanks_csv}: expected header node_id")
    foodbanks = tuple(int(r["node_id"]) for r in fb_rows)
    known = {nd.node_id for nd in nodes}
    missing = [f for f in foodbanks if f not in known]
    if missing:
        raise ValidationError(f"{foodbanks_csv}: unknown node_ids {missing}")

    with open(distances_csv, newline="", encoding="utf-8") as fh:
        raw = list(csv.reader(fh))
    header_ids = [int(c) for c in raw[0][1:]]
    row_ids = [int(r[0]) for r in raw[1:]]
    if header_ids != row_ids:
        raise ValidationError(f"{distances_csv}: row and column node_id orders differ")
    if set(header_ids) != known:
        raise ValidationError(f"{distances_csv}: node_ids do not match {counties_csv}")
    d = np.array([[float(c) for c in r[1:]] for r in raw[1:]])
    # reorder matrix rows/columns into counties.csv node order
    pos = {nid: k for k, nid in enumerate(header_ids)}
    perm = np.array([pos[nd.node_id] for nd in nodes])
    d = d[np.ix_(perm, perm)]
    return Region(nodes=nodes, foodbanks=foodbanks, dist=d)


def write_region(region: Region, counties_csv, foodbanks_csv, distances_csv) -> None:
    """Inverse of load_region; used by demos and round-trip tests."""
    import csv

    with open(counties_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "name", "fi_pop", "total_pop"])
        for nd in region.nodes:
            w.writerow([nd.node_id, nd.name, nd.fi_pop, nd.total_pop])
    with open(foodbanks_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id"])
        for f in region.foodbanks:
            w.writerow([f])
    with open(distances_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        ids = list(region.node_ids)
        w.writerow([""] + ids)
        for k, nid in enumerate(ids):
            w.writerow([nid] + [repr(float(x)) for x in region.dist[k]])


def line_region(
    positions: list[float],
    foodbanks: list[int],
    fi_pop: list[int] | None = None,
    total_pop: list[int] | None = None,
) -> Region:
    """Nodes on a line at the given mile marks; ids are 0..n-1 in order."""
    n = len(positions)
    fi = fi_pop if fi_pop is not None else [1] * n
    tot = total_pop if total_pop is not None else list(fi)
    pos = np.asarray(positions, dtype=np.float64)
    d = np.abs(pos[:, None] - pos[None, :])
    nodes = tuple(Node(i, f"n{i}", fi[i], tot[i]) for i in range(n))
    return Region(nodes=nodes, foodbanks=tuple(foodbanks), dist=d)


def random_euclidean_region(
    n_nodes: int,
    n_banks: int,
    seed: int,
    box_miles: float = 200.0,
    fi_pop_range: tuple[int, int] = (1, 20),
    pop_noise: float = 0.3,
    unpopulated_banks: bool = False,
) -> Region:
    """Random points in a square with Euclidean distances (a metric by construction).

    Food banks sit at the first ``n_banks`` sampled nodes; total population
    tracks the food-insecure population up to multiplicative noise so the
    induced bias stays moderate. With ``unpopulated_banks`` the bank nodes
    carry zero population, so sampled donations never start or end exactly
    at a bank and driver-optimal route argmins are almost surely unique.
    """
    if n_banks > n_nodes:
        raise ValueError("more banks than nodes")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 0xE0C1))))
    pts = rng.random((n_nodes, 2)) * box_miles
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(d, 0.0)
    lo, hi = fi_pop_range
    fi = rng.integers(lo, hi + 1, size=n_nodes)
    factor = 1.0 + pop_noise * (2.0 * rng.random(n_nodes) - 1.0)
    tot = np.maximum(1, np.rint(fi * 5 * factor)).astype(int)
    if unpopulated_banks:
        fi[:n_banks] = 0
        tot[:n_banks] = 0
    nodes = tuple(Node(i, f"c{i}", int(fi[i]), int(tot[i])) for i in range(n_nodes))
    return Region(nodes=nodes, foodbanks=tuple(range(n_banks)), dist=d)
