"""Layered-sampling coresets for the robust barycenter objective.

Measures are grouped into rings by their robust distance to an anchor
``nu_tilde``. Ring ``0`` holds distances up to ``H`` (the anchor's cost raised
to ``1/z``) and ring ``k`` holds ``(2^(k-1) H, 2^k H]`` for ``k = 1..K``. A
last ring catches everything beyond ``2^K H``. Each inner ring is kept as is
or replaced by ``gamma`` weighted draws. The outer ring is replaced by its
nearest and farthest members, weighted so that both the ring's total weight
and its cost at the anchor are preserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map
from .errors import InputError
from .fixed import FixedProblem, solve_fixed
from .measures import DiscreteMeasure, WeightedMeasureSet, build_cost_matrix
from .ot import wasserstein_distance
from .robust import OutlierBudget, robust_ot


def _root(x, z):
    x = np.maximum(np.asarray(x, dtype=np.float64), 0.0)
    return x if z == 1 else x ** (1.0 / z)


def robust_costs(dataset: WeightedMeasureSet, nu: DiscreteMeasure, zeta=0.0, z=2.0, threads=None):
    """Robust transport cost (z-th power) from every measure to ``nu``,
    trimming ``zeta`` on the measure side only."""
    budget = OutlierBudget(zeta, 0.0)

    def one(mu):
        C = build_cost_matrix(mu.locations, nu.locations, z).entries
        return robust_ot(mu.weights, nu.weights, C, budget).value

    return np.array(parallel_map(one, dataset.measures, threads))


@dataclass(frozen=True)
class LocalRegion:
    """Ball of radius ``radius`` around ``anchor`` in the ``W_z`` metric."""

    anchor: DiscreteMeasure
    radius: float
    z: float = 2.0

    def __post_init__(self):
        if not self.radius >= 0:
            raise InputError(f"radius must be >= 0, got {self.radius}")

    def distance(self, nu: DiscreteMeasure) -> float:
        return wasserstein_distance(self.anchor, nu, self.z)

    def contains(self, nu: DiscreteMeasure, tol=1e-8) -> bool:
        return self.distance(nu) <= self.radius + tol


@dataclass(frozen=True)
class LayerPartition:
    """Ring assignment of every measure around an anchor.

    ``layers`` has ``K + 2`` index arrays; the last one is the outer ring.
    ``costs`` are robust costs (z-th powers) and ``distances`` their roots.
    ``degenerate`` is set when the anchor has zero cost, i.e. ``H == 0``.
    """

    H: float
    K: int
    layers: tuple
    distances: np.ndarray
    costs: np.ndarray
    degenerate: bool = False

    @property
    def outer(self):
        return self.layers[-1]


def num_rings(epsilon):
    """``K = ceil(log2(1 / epsilon))``."""
    if not 0 < epsilon < 1:
        raise InputError(f"epsilon must lie in (0, 1), got {epsilon}")
    # guard against 1/0.25 landing a hair above 2.0 in floating point
    return max(0, math.ceil(math.log2(1.0 / epsilon) - 1e-12))


def assign_layers(distances, H, K):
    """Ring index of each distance; see :class:`LayerPartition`."""
    d = np.asarray(distances, dtype=np.float64)
    ring = np.full(d.shape, K + 1, dtype=int)
    for k in range(K, -1, -1):
        ring[d <= (2.0**k) * H] = k
    ring[d <= H] = 0
    return ring


def partition_layers(
    dataset: WeightedMeasureSet, anchor: DiscreteMeasure, epsilon, zeta=0.0, z=2.0, threads=None
) -> LayerPartition:
    """Split ``dataset`` into ``K + 2`` rings around ``anchor``."""
    K = num_rings(epsilon)
    costs = robust_costs(dataset, anchor, zeta, z, threads)
    dist = _root(costs, z)
    w = dataset.set_weights
    H = float(_root(np.dot(w, costs) / w.sum(), z))
    if H == 0.0:
        layers = (np.arange(dataset.m),) + tuple(np.empty(0, dtype=int) for _ in range(K + 1))
        return LayerPartition(0.0, K, layers, dist, costs, degenerate=True)
    ring = assign_layers(dist, H, K)
    layers = tuple(np.flatnonzero(ring == k) for k in range(K + 2))
    return LayerPartition(H, K, layers, dist, costs)


@dataclass(frozen=True)
class OuterWeights:
    i_max: int
    i_min: int
    tau_max: float
    tau_min: float

    def residual(self, costs, weights):
        """Mismatch of the preserved cost ``sum_l w_l c_l``."""
        lhs = self.tau_max * costs[self.i_max]
        if self.i_min != self.i_max:
            lhs += self.tau_min * costs[self.i_min]
        return abs(lhs - float(np.dot(weights, costs)))


def outer_layer_weights(costs, weights) -> OuterWeights:
    """Two-point summary of the outer ring.

    Picks the members with the largest and smallest cost and weights them so
    that ``tau_max + tau_min`` equals the ring's total weight and
    ``tau_max c_max + tau_min c_min`` equals its total weighted cost.
    Indices are positions within ``costs``.

    A singleton ring, or a ring whose costs are all equal, collapses to a
    single member carrying the whole weight (``i_min == i_max``,
    ``tau_min == 0``).
    """
    c = np.asarray(costs, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if c.size == 0:
        raise InputError("outer ring is empty")
    W = float(w.sum())
    i_max, i_min = int(np.argmax(c)), int(np.argmin(c))
    if c[i_max] == c[i_min]:
        return OuterWeights(i_max, i_max, W, 0.0)
    S = float(np.dot(w, c))
    tau_max = (S - W * c[i_min]) / (c[i_max] - c[i_min])
    # the weighted mean lies between the extremes, so both weights are >= 0
    assert -1e-9 * W <= tau_max <= W * (1 + 1e-9), (tau_max, W)
    tau_max = min(max(tau_max, 0.0), W)
    return OuterWeights(i_max, i_min, tau_max, W - tau_max)


@dataclass(frozen=True)
class CoresetResult:
    """A coreset and where each of its entries came from.

    ``sources[e]`` is the index in the input set of entry ``e`` and
    ``origins[e]`` its ring. ``draws`` counts draws per ring (0 when the
    ring was kept whole).
    """

    coreset: WeightedMeasureSet
    sources: np.ndarray
    origins: np.ndarray
    partition: LayerPartition
    draws: tuple
    outer: OuterWeights | None = None
    ring_mass: tuple = field(default=())

    @property
    def size(self):
        return self.coreset.m

    def provenance(self):
        K = self.partition.K
        rings = []
        for k in range(K + 2):
            rings.append(
                {
                    "layer": k,
                    "members": int(self.partition.layers[k].size),
                    "mass": float(self.ring_mass[k]),
                    "draws": int(self.draws[k]),
                    "entries": int(np.sum(self.origins == k)),
                }
            )
        return {
            "H": self.partition.H,
            "K": K,
            "degenerate": self.partition.degenerate,
            "source": self.sources.tolist(),
            "layer": self.origins.tolist(),
            "layers": rings,
        }

    def to_dict(self):
        obj = self.coreset.to_dict()
        obj["tau"] = self.coreset.set_weights.tolist()
        obj["provenance"] = self.provenance()
        return obj


def _distinct(dataset, idx):
    """Group indices by identical measure; returns (representatives, weights)."""
    reps, mass, seen = [], [], {}
    for l in idx:
        key = dataset[l]
        if key in seen:
            mass[seen[key]] += dataset.set_weights[l]
        else:
            seen[key] = len(reps)
            reps.append(int(l))
            mass.append(float(dataset.set_weights[l]))
    return reps, mass


def build_coreset(
    dataset: WeightedMeasureSet,
    anchor: DiscreteMeasure,
    epsilon,
    gamma,
    rng_seed,
    zeta=0.0,
    z=2.0,
    partition: LayerPartition | None = None,
    threads=None,
) -> CoresetResult:
    """Layered-sampling coreset around ``anchor``.

    Parameters
    ----------
    dataset : WeightedMeasureSet
    anchor : DiscreteMeasure
    epsilon : float
        Target relative error; sets the number of rings.
    gamma : int
        Draws per ring. Rings with at most ``gamma`` members are kept whole.
    rng_seed : int or numpy Generator
    zeta, z : float
        Outlier mass and cost exponent used for the ring distances.
    partition : LayerPartition, optional
        Reuse a precomputed partition.

    Returns
    -------
    CoresetResult
    """
    gamma = int(gamma)
    if gamma < 1:
        raise InputError(f"gamma must be >= 1, got {gamma}")
    if partition is None:
        partition = partition_layers(dataset, anchor, epsilon, zeta, z, threads)
    rng = np.random.default_rng(rng_seed)
    w = dataset.set_weights
    K = partition.K
    ring_mass = tuple(float(w[idx].sum()) for idx in partition.layers)
    sources, origins, taus, draws = [], [], [], [0] * (K + 2)

    if partition.degenerate:
        reps, mass = _distinct(dataset, partition.layers[0])
        sources, taus, origins = reps, mass, [0] * len(reps)
        return _result(dataset, sources, origins, taus, partition, draws, None, ring_mass)

    for k in range(K + 1):
        idx = partition.layers[k]
        if idx.size == 0:
            continue
        if idx.size <= gamma:
            sources.extend(idx.tolist())
            taus.extend(w[idx].tolist())
        else:
            p = w[idx] / w[idx].sum()
            picks = rng.choice(idx, size=gamma, replace=True, p=p)
            sources.extend(picks.tolist())
            taus.extend([ring_mass[k] / gamma] * gamma)
            draws[k] = gamma
        origins.extend([k] * (len(sources) - len(origins)))

    outer = None
    idx = partition.outer
    if idx.size:
        outer = outer_layer_weights(partition.costs[idx], w[idx])
        sources.append(int(idx[outer.i_max]))
        taus.append(outer.tau_max)
        if outer.i_min != outer.i_max and outer.tau_min > 0:
            sources.append(int(idx[outer.i_min]))
            taus.append(outer.tau_min)
        origins.extend([K + 1] * (len(sources) - len(origins)))
        outer = OuterWeights(int(idx[outer.i_max]), int(idx[outer.i_min]), outer.tau_max, outer.tau_min)
    return _result(dataset, sources, origins, taus, partition, draws, outer, ring_mass)


def _result(dataset, sources, origins, taus, partition, draws, outer, ring_mass):
    core = WeightedMeasureSet(tuple(dataset[l] for l in sources), np.asarray(taus))
    return CoresetResult(
        core,
        np.asarray(sources, dtype=int),
        np.asarray(origins, dtype=int),
        partition,
        tuple(draws),
        outer,
        ring_mass,
    )


def approx_init(
    dataset: WeightedMeasureSet,
    t=5,
    zeta=0.0,
    z=2.0,
    rng_seed=None,
    additive_error=1e-3,
    solver="auto",
    lp_max_variables=50_000,
    return_cost=False,
):
    """Initial barycenter from the supports of a few sampled measures.

    Draws ``t`` measures with probability proportional to their set weight,
    solves the fixed-support problem on each drawn measure's atoms and keeps
    the cheapest result.

    Parameters
    ----------
    solver : {"auto", "lp", "entropic"}
        Fixed-support solver, see :func:`rwb.fixed.solve_fixed`.
    return_cost : bool
        Also return the fixed-support objective of the chosen candidate.
    """
    t = int(t)
    if t < 1:
        raise InputError(f"t must be >= 1, got {t}")
    rng = np.random.default_rng(rng_seed)
    w = dataset.set_weights
    picks = rng.choice(dataset.m, size=t, replace=True, p=w / w.sum())
    best = (math.inf, None)
    for l in dict.fromkeys(picks.tolist()):
        support = dataset[l].locations
        problem = FixedProblem(dataset, support, zeta, z)
        sol = solve_fixed(problem, solver, additive_error, lp_max_variables)
        if sol.value < best[0]:
            best = (sol.value, sol.barycenter(support))
    return (best[1], best[0]) if return_cost else best[1]
