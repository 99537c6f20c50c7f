"""Free-support robust barycenter by alternating minimization.

Starting from a sampled initial barycenter, the solver alternates two
block updates on a coreset:

* weights: solve the fixed-support problem on the current atoms;
* locations: move every atom to the minimizer of its transported cost
  (weighted mean for ``z = 2``, geometric median for ``z = 1``).

The coreset is only trusted near the anchor it was built around. Every new
iterate is checked against that region. A location step that leaves it
re-anchors at the new iterate and rebuilds the coreset. A weight step that
leaves it re-anchors too, unless the coreset was just rebuilt; then the
step is halved until it fits, and exact plans are recomputed for the
shortened weights.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map
from .coreset import LocalRegion, approx_init, build_coreset, partition_layers
from .errors import InputError, RebuildStormError
from .fixed import FixedProblem, solve_fixed
from .measures import DiscreteMeasure, WeightedMeasureSet, build_cost_matrix
from .ot import solve_ot_exact

REGION_TOL = 1e-8


@dataclass(frozen=True)
class FreeConfig:
    """Settings for :func:`solve_free_rwb`.

    Attributes
    ----------
    z : float
        Cost exponent; the location step supports 1 and 2.
    zeta : float
        Outlier mass trimmed from each input measure.
    epsilon : float
        Coreset accuracy; fixes the number of rings.
    gamma : int
        Draws per coreset ring.
    t_init : int
        Number of sampled candidate supports for the initial barycenter.
    iterations : int
        Cap on outer iterations.
    ot_epsilon : float
        Additive error of the entropic fixed-support solves.
    rng_seed : int
    weights_on : {"coreset", "full"}
        Which measure set the weight and location steps run on.
    weight_solver : {"auto", "lp", "entropic"}
        Fixed-support solver for the weight step and the initial
        barycenter; ``"auto"`` picks the LP up to ``lp_max_variables``.
    rel_tol : float
        Stop once an iteration improves the objective by less than this
        fraction.
    max_rebuilds : int
        More rebuilds than this raise :class:`RebuildStormError`.
    radius : float, optional
        Region radius; defaults to the anchor's cost raised to ``1 / z``.
    """

    z: float = 2.0
    zeta: float = 0.0
    epsilon: float = 0.2
    gamma: int = 100
    t_init: int = 5
    iterations: int = 20
    ot_epsilon: float = 1e-3
    rng_seed: int = 0
    weights_on: str = "coreset"
    weight_solver: str = "auto"
    lp_max_variables: int = 50_000
    rel_tol: float = 1e-6
    max_rebuilds: int = 10
    radius: float | None = None
    threads: int | None = None

    def __post_init__(self):
        if self.z not in (1, 2):
            raise InputError(
                f"location updates are implemented for z in {{1, 2}}, got z={self.z}"
            )
        if not 0.0 <= self.zeta < 1.0:
            raise InputError(f"zeta must lie in [0, 1), got {self.zeta}")
        if not 0.0 < self.epsilon < 1.0:
            raise InputError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if int(self.iterations) < 1 or int(self.gamma) < 1 or int(self.t_init) < 1:
            raise InputError("iterations, gamma and t_init must be >= 1")
        if not (self.ot_epsilon > 0 and self.rel_tol > 0):
            raise InputError("tolerances must be > 0")
        if self.weights_on not in ("coreset", "full"):
            raise InputError(f"weights_on must be 'coreset' or 'full', got {self.weights_on!r}")
        if self.weight_solver not in ("auto", "lp", "entropic"):
            raise InputError(f"unknown weight_solver {self.weight_solver!r}")
        if self.radius is not None and not self.radius >= 0:
            raise InputError("radius must be >= 0")

    @classmethod
    def from_dict(cls, obj):
        known = {k: obj[k] for k in cls.__dataclass_fields__ if k in obj}
        return cls(**known)


@dataclass
class SolveTrace:
    """Per-step log of a free-support solve.

    Each record is a dict with keys ``iteration``, ``step`` (``"init"``,
    ``"weights"``, ``"locations"`` or ``"rebuild"``), ``objective`` (on the
    current coreset), ``region_distance``, ``radius``, ``inside``,
    ``damping`` and ``elapsed``.
    """

    records: list = field(default_factory=list)
    rebuilds: int = 0
    converged: bool = False

    def add(self, **record):
        self.records.append(record)
        return record

    def objectives(self):
        return [r["objective"] for r in self.records if r["step"] in ("weights", "locations")]

    def to_jsonl(self, timing=True):
        lines = []
        for r in self.records:
            r = dict(r)
            if not timing:
                r.pop("elapsed", None)
            lines.append(json.dumps(r, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Block updates
# ---------------------------------------------------------------------------


def update_weights(
    coreset: WeightedMeasureSet, support, zeta, z, ot_epsilon, solver="auto",
    lp_max_variables=50_000,
):
    """Optimal weights on a fixed support.

    Returns
    -------
    b : ndarray
        Barycenter weights (the dummy entry is dropped), summing to one.
    plans : tuple of ndarray
        Augmented plans, one per coreset entry.
    value : float
        Objective of the rounded solution.
    """
    problem = FixedProblem(coreset, support, zeta, z)
    sol = solve_fixed(problem, solver, ot_epsilon, lp_max_variables)
    return sol.weights, sol.plans_aug, sol.value


def geometric_median(X, w, y0=None, tol=1e-9, max_iter=1000):
    """Weighted geometric median by Weiszfeld iterations.

    Iterates that land on a data point are handled with the Vardi-Zhang
    correction, so the fixed point is the true minimizer.
    """
    X = np.asarray(X, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    y = np.average(X, axis=0, weights=w) if y0 is None else np.asarray(y0, dtype=np.float64)
    for _ in range(max_iter):
        d = np.linalg.norm(X - y, axis=1)
        at = d <= 1e-12
        if np.all(at | (w == 0)):
            return y
        inv = np.where(at, 0.0, w / np.where(at, 1.0, d))
        T = inv @ X / inv.sum()
        eta = w[at].sum()
        if eta > 0:
            R = inv @ (X - y)
            r = np.linalg.norm(R)
            if r <= eta:
                return y
            y_new = (1 - eta / r) * T + (eta / r) * y
        else:
            y_new = T
        step = np.linalg.norm(y_new - y)
        y = y_new
        if step <= tol * max(1.0, np.linalg.norm(y)):
            break
    return y


def _column_masses(coreset, plans, n):
    tau = coreset.set_weights
    return [tau[l] * np.asarray(P)[:, :n] for l, P in enumerate(plans)]


def update_locations(coreset: WeightedMeasureSet, plans, b, z, support):
    """Move every support point to the minimizer of its transported cost.

    Column ``j`` of plan ``l`` sends mass ``tau_l P^l_ij`` from atom
    ``x^l_i``. For ``z = 2`` the new point is the weighted mean of those
    atoms, for ``z = 1`` their weighted geometric median. Columns that
    receive no mass keep their previous location.
    """
    if z not in (1, 2):
        raise InputError(f"location updates are implemented for z in {{1, 2}}, got z={z}")
    Y = np.array(support, dtype=np.float64)
    n = Y.shape[0]
    masses = _column_masses(coreset, plans, n)
    X = np.vstack([mu.locations for mu in coreset])
    M = np.vstack(masses)  # (sum n_l, n)
    tot = M.sum(axis=0)
    for j in range(n):
        if not tot[j] > 0:
            continue
        if z == 2:
            Y[j] = M[:, j] @ X / tot[j]
        else:
            keep = M[:, j] > 0
            Y[j] = geometric_median(X[keep], M[keep, j], Y[j])
    return Y


def location_objective(coreset, plans, support, z):
    """Transport cost of fixed plans towards ``support``, averaged with the
    coreset weights (the dummy column is free)."""
    Y = np.asarray(support, dtype=np.float64)
    n = Y.shape[0]
    tau = coreset.set_weights
    total = 0.0
    for l, (mu, P) in enumerate(zip(coreset, plans)):
        D = np.linalg.norm(mu.locations[:, None, :] - Y[None, :, :], axis=2)
        total += tau[l] * np.sum(np.asarray(P)[:, :n] * D**z)
    return float(total / tau.sum())


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


class _Region:
    """Anchor, coreset and radius; rebuilt on region exits."""

    def __init__(self, dataset, anchor, config, rebuild_index):
        c = config
        seed = np.random.SeedSequence([int(c.rng_seed), 1, rebuild_index])
        part = partition_layers(dataset, anchor, c.epsilon, c.zeta, c.z, c.threads)
        self.result = build_coreset(
            dataset, anchor, c.epsilon, c.gamma, seed, c.zeta, c.z, partition=part
        )
        self.radius = part.H if c.radius is None else float(c.radius)
        self.region = LocalRegion(anchor, self.radius, c.z)
        self.work = dataset if c.weights_on == "full" else self.result.coreset

    def distance(self, Y, b):
        return self.region.distance(DiscreteMeasure(Y, b / b.sum()))

    def inside(self, d):
        return d <= self.radius + REGION_TOL


def exact_plans(work: WeightedMeasureSet, support, b, zeta, z, threads=None):
    """Optimal augmented plans and objective for fixed ``(support, b)``."""
    Y = np.asarray(support, dtype=np.float64)
    b_aug = np.append(b, zeta / (1.0 - zeta))

    def one(mu):
        C = build_cost_matrix(mu.locations, Y, z).entries
        C_aug = np.hstack([C, np.zeros((mu.n, 1))])
        return solve_ot_exact(mu.weights / (1.0 - zeta), b_aug, C_aug).plan.entries

    plans = tuple(parallel_map(one, work.measures, threads))
    return plans, location_objective(work, plans, Y, z)


def _shrink(state, make, max_halvings=30):
    """Largest ``t = 2^-k`` whose candidate ``make(t)`` stays in the region;
    0 if none does."""
    t = 1.0
    for _ in range(max_halvings):
        t /= 2.0
        Y, b = make(t)
        d = state.distance(Y, b)
        if state.inside(d):
            return t, d
    Y, b = make(0.0)
    return 0.0, state.distance(Y, b)


def solve_free_rwb(dataset: WeightedMeasureSet, config: FreeConfig, heartbeat=None):
    """Free-support robust barycenter.

    Parameters
    ----------
    dataset : WeightedMeasureSet
    config : FreeConfig
    heartbeat : callable, optional
        Called with every trace record as it is produced.

    Returns
    -------
    nu : DiscreteMeasure
    trace : SolveTrace

    Raises
    ------
    RebuildStormError
        If the iterate leaves the coreset's region more than
        ``config.max_rebuilds`` times.
    """
    c = config
    t0 = time.perf_counter()
    trace = SolveTrace()

    def log(**rec):
        rec["elapsed"] = time.perf_counter() - t0
        trace.add(**rec)
        if heartbeat is not None:
            heartbeat(rec)

    init_seed = np.random.SeedSequence([int(c.rng_seed), 0])
    nu = approx_init(
        dataset, c.t_init, c.zeta, c.z, init_seed, c.ot_epsilon, c.weight_solver,
        c.lp_max_variables,
    )
    state = _Region(dataset, nu, c, 0)
    log(iteration=0, step="init", objective=None, region_distance=0.0,
        radius=state.radius, inside=True, damping=1.0, coreset_size=state.result.size)

    Y, b = np.array(nu.locations), np.array(nu.weights)
    just_rebuilt = False
    prev_obj = math.inf

    def rebuild(it, Y, b):
        nonlocal state, just_rebuilt, prev_obj
        trace.rebuilds += 1
        if trace.rebuilds > c.max_rebuilds:
            raise RebuildStormError(
                f"iterate left the coreset region {trace.rebuilds} times; "
                "increase the radius or gamma"
            )
        state = _Region(dataset, DiscreteMeasure(Y, b / b.sum()), c, trace.rebuilds)
        just_rebuilt = True
        prev_obj = math.inf
        log(iteration=it, step="rebuild", objective=None, region_distance=0.0,
            radius=state.radius, inside=True, damping=1.0, coreset_size=state.result.size)

    for it in range(1, int(c.iterations) + 1):
        work = state.work

        # weight step
        b_new, plans, obj = update_weights(
            work, Y, c.zeta, c.z, c.ot_epsilon, c.weight_solver, c.lp_max_variables
        )
        d, t = state.distance(Y, b_new), 1.0
        if not state.inside(d):
            if not just_rebuilt:
                b = b_new
                rebuild(it, Y, b)
                continue
            t, d = _shrink(state, lambda s: (Y, (1 - s) * b + s * b_new))
            b_new = (1 - t) * b + t * b_new
            plans, obj = exact_plans(work, Y, b_new, c.zeta, c.z, c.threads)
        b = b_new
        just_rebuilt = False
        log(iteration=it, step="weights", objective=obj, region_distance=d,
            radius=state.radius, inside=True, damping=t)

        # location step
        Y_new = update_locations(work, plans, b, c.z, Y)
        d, t = state.distance(Y_new, b), 1.0
        if not state.inside(d):
            Y = Y_new
            rebuild(it, Y, b)
            continue
        Y = Y_new
        obj = location_objective(work, plans, Y, c.z)
        log(iteration=it, step="locations", objective=obj, region_distance=d,
            radius=state.radius, inside=True, damping=t)

        if math.isfinite(prev_obj) and prev_obj - obj <= c.rel_tol * abs(prev_obj):
            trace.converged = True
            break
        prev_obj = obj
    return DiscreteMeasure(Y, b / b.sum()), trace
