"""Fixed-support robust Wasserstein barycenter.

With the support ``Y`` of the barycenter fixed, the robust barycenter
problem becomes one linear program over ``m`` augmented plans. Plan ``l``
has rows ``a^l / (1 - zeta)`` and columns ``(b; zeta / (1 - zeta))``. The
weight vector ``b`` is shared, and the dummy column absorbs the trimmed
mass of each input measure at zero cost.

Two solvers are provided. :func:`solve_fixed_awb_exact` hands the LP to
HiGHS and is meant for small instances. :func:`solve_fixed_awb` runs
iterative Bregman projections in the log domain with a decreasing
temperature, and stops once a rounded primal solution and a feasible dual
solution are within the requested additive error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ._parallel import parallel_map
from .errors import CapacityError, ConvergenceError, InputError
from .measures import DiscreteMeasure, WeightedMeasureSet, as_points, build_cost_matrix
from .ot import solve_ot_exact, stage_stalled
from .robust import OutlierBudget, robust_ot

MAX_LP_VARIABLES = 5000


@dataclass(frozen=True)
class FixedProblem:
    """A measure set, a candidate support ``Y`` and the outlier mass ``zeta``."""

    dataset: WeightedMeasureSet
    support: np.ndarray
    zeta: float = 0.0
    z: float = 2.0

    def __post_init__(self):
        Y = as_points(self.support, d=self.dataset.dim)
        Y.setflags(write=False)
        object.__setattr__(self, "support", Y)
        if not 0.0 <= self.zeta < 1.0:
            raise InputError(f"zeta must lie in [0, 1), got {self.zeta}")
        if not self.z >= 1:
            raise InputError(f"z must be >= 1, got {self.z}")

    @property
    def n(self):
        return self.support.shape[0]

    @property
    def dummy_mass(self):
        return self.zeta / (1.0 - self.zeta)

    @property
    def omega(self):
        """Set weights normalized to sum to one."""
        w = self.dataset.set_weights
        return w / w.sum()

    @cached_property
    def costs(self):
        """Per-measure cost matrices between atoms and the support."""
        return tuple(
            build_cost_matrix(mu.locations, self.support, self.z).entries
            for mu in self.dataset
        )

    def objective(self, plans_aug):
        """Weighted average of the plans' costs (the dummy column is free)."""
        return float(
            sum(w * np.sum(P[:, :-1] * C) for w, P, C in zip(self.omega, plans_aug, self.costs))
        )


@dataclass(frozen=True)
class FixedSolution:
    """Barycenter weights on the fixed support and the augmented plans.

    ``plans_aug[l]`` has shape ``(n_l, n + 1)``; its last column is the mass
    of measure ``l`` routed to the dummy point.
    """

    weights: np.ndarray
    plans_aug: tuple
    value: float
    gap: float = 0.0
    iterations: int = 0

    def barycenter(self, support):
        return DiscreteMeasure(support, self.weights)


# ---------------------------------------------------------------------------
# Objective evaluation
# ---------------------------------------------------------------------------


def rwb_cost(dataset: WeightedMeasureSet, nu: DiscreteMeasure, zeta=0.0, z=2.0, threads=None):
    """Weighted mean robust cost of ``nu`` against every measure.

    Only the input side is trimmed (``zeta_mu = zeta``, ``zeta_nu = 0``).
    Each term is solved exactly.
    """
    budget = OutlierBudget(zeta, 0.0)
    values = parallel_map(
        lambda mu: robust_ot(
            mu.weights, nu.weights, build_cost_matrix(mu.locations, nu.locations, z).entries, budget
        ).value,
        dataset.measures,
        threads,
    )
    w = dataset.set_weights
    return float(np.dot(w, values) / w.sum())


def awb_cost(dataset: WeightedMeasureSet, nu: DiscreteMeasure, zeta=0.0, z=2.0, threads=None):
    """Weighted mean of augmented transport costs with ``(b; zeta/(1-zeta))``
    on the barycenter side. Equals :func:`rwb_cost`."""
    b_aug = np.append(nu.weights, zeta / (1.0 - zeta))

    def one(mu):
        C = build_cost_matrix(mu.locations, nu.locations, z).entries
        C_aug = np.hstack([C, np.zeros((mu.n, 1))])
        return solve_ot_exact(mu.weights / (1.0 - zeta), b_aug, C_aug).value

    values = parallel_map(one, dataset.measures, threads)
    w = dataset.set_weights
    return float(np.dot(w, values) / w.sum())


# ---------------------------------------------------------------------------
# Exact LP
# ---------------------------------------------------------------------------


def lp_size(problem: FixedProblem):
    n = problem.n
    return sum(mu.n * (n + 1) for mu in problem.dataset) + n


def solve_fixed_awb_exact(problem: FixedProblem, max_variables=MAX_LP_VARIABLES) -> FixedSolution:
    """Solve the fixed-support problem as one LP with HiGHS.

    Raises
    ------
    CapacityError
        If the LP has more than ``max_variables`` variables.
    """
    nvar = lp_size(problem)
    if nvar > max_variables:
        raise CapacityError(
            f"exact LP would have {nvar} variables (limit {max_variables}); "
            "use the entropic solver solve_fixed_awb instead"
        )
    n, zeta = problem.n, problem.zeta
    w = problem.omega
    b_off = nvar - n
    rows, cols, data, rhs, cost, offsets = [], [], [], [], [], []
    offset, eq = 0, 0

    def add(columns, coeffs, value):
        nonlocal eq
        rows.append(np.full(len(columns), eq))
        cols.append(np.asarray(columns))
        data.append(np.asarray(coeffs, dtype=np.float64))
        rhs.append(value)
        eq += 1

    for l, mu in enumerate(problem.dataset):
        nl = mu.n
        offsets.append(offset)
        idx = offset + np.arange(nl * (n + 1)).reshape(nl, n + 1)
        for i in range(nl):
            add(idx[i], np.ones(n + 1), mu.weights[i] / (1.0 - zeta))
        # shared columns: sum_i P_ij - b_j = 0
        for j in range(n):
            add(np.append(idx[:, j], b_off + j), np.append(np.ones(nl), -1.0), 0.0)
        add(idx[:, n], np.ones(nl), problem.dummy_mass)
        c = np.zeros((nl, n + 1))
        c[:, :n] = w[l] * problem.costs[l]
        cost.append(c.ravel())
        offset += nl * (n + 1)
    A = sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(eq, nvar)
    )
    c = np.concatenate(cost + [np.zeros(n)])
    res = linprog(
        c,
        A_eq=A,
        b_eq=np.asarray(rhs),
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise ConvergenceError(f"HiGHS failed on the fixed-support LP: {res.message}")
    x = np.maximum(res.x, 0.0)
    plans = tuple(
        x[o : o + mu.n * (n + 1)].reshape(mu.n, n + 1)
        for o, mu in zip(offsets, problem.dataset)
    )
    b = x[b_off:]
    b = b / b.sum()
    return FixedSolution(b, plans, problem.objective(plans), 0.0, int(res.nit))


def solve_fixed(problem: FixedProblem, solver="auto", additive_error=1e-3,
                lp_max_variables=50_000) -> FixedSolution:
    """Dispatch to the LP or the entropic solver.

    ``solver="auto"`` uses the LP whenever it has at most
    ``lp_max_variables`` variables. HiGHS is much faster than Bregman
    projections at tight accuracy on such sizes.
    """
    if solver == "auto":
        solver = "lp" if lp_size(problem) <= lp_max_variables else "entropic"
    if solver == "lp":
        return solve_fixed_awb_exact(problem, max_variables=lp_max_variables)
    if solver == "entropic":
        return solve_fixed_awb(problem, additive_error)
    raise InputError(f"unknown solver {solver!r}; expected 'auto', 'lp' or 'entropic'")


# ---------------------------------------------------------------------------
# Iterative Bregman projections
# ---------------------------------------------------------------------------


def _lse(x, axis):
    M = np.max(x, axis=axis, keepdims=True)
    M = np.where(np.isfinite(M), M, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - M), axis=axis, keepdims=True)) + M
    return np.squeeze(out, axis=axis)


def _round_batch(P, alpha, beta, order):
    """Batched marginal rounding.

    ``P`` is (m, r, c), ``alpha`` (m, r) and ``beta`` (c,). Rows and then
    columns are scaled down to their targets. The leftover deficit is then
    filled greedily along ``order``, the cells of each plan sorted by
    increasing cost. A rank-one spread would push mass into cells whose cost
    can be orders of magnitude above the optimum, e.g. far outliers.
    """
    m, r, c = P.shape
    rs = P.sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        fr = np.where(rs > 0, np.minimum(alpha / rs, 1.0), 1.0)
    X = P * fr[:, :, None]
    cs = X.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fc = np.where(cs > 0, np.minimum(beta[None, :] / cs, 1.0), 1.0)
    Y = (X * fc[:, None, :]).reshape(m, r * c)
    er = np.maximum(alpha - Y.reshape(m, r, c).sum(axis=2), 0.0)
    ec = np.maximum(beta[None, :] - Y.reshape(m, r, c).sum(axis=1), 0.0)
    ls = np.arange(m)
    for k in range(r * c):
        cell = order[:, k]
        i, j = cell // c, cell % c
        t = np.minimum(er[ls, i], ec[ls, j])
        Y[ls, cell] += t
        er[ls, i] -= t
        ec[ls, j] -= t
    return Y.reshape(m, r, c)


class _Stacked:
    """Padded dense arrays for a fixed-support problem."""

    def __init__(self, problem: FixedProblem):
        self.problem = problem
        m = len(problem.dataset)
        self.n = n = problem.n
        self.sizes = [mu.n for mu in problem.dataset]
        r = max(self.sizes)
        self.has_dummy = problem.zeta > 0
        c = n + 1 if self.has_dummy else n
        self.C = np.zeros((m, r, c))
        self.alpha = np.zeros((m, r))
        for l, (mu, Cl) in enumerate(zip(problem.dataset, problem.costs)):
            self.C[l, : mu.n, :n] = Cl
            self.alpha[l, : mu.n] = mu.weights / (1.0 - problem.zeta)
        self.live = self.alpha > 0
        with np.errstate(divide="ignore"):
            self.log_alpha = np.log(self.alpha)
        self.w = problem.omega
        self.delta = problem.dummy_mass
        self.cmax = float(self.C.max())
        # padded rows get infinite cost so they come last in the greedy fill
        Cl = np.where(self.live[:, :, None], self.C, np.inf).reshape(m, r * c)
        self.order = np.argsort(Cl, axis=1, kind="stable")

    def rounded(self, P):
        """Feasible plans from approximate ones; returns (b, plans)."""
        n = self.n
        r = P.sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            P = P * np.where(r > 0, self.alpha / r, 0.0)[:, :, None]
        b = np.einsum("l,lj->j", self.w, P[:, :, :n].sum(axis=1))
        b = b / b.sum()
        beta = np.append(b, self.delta) if self.has_dummy else b
        return b, _round_batch(P, self.alpha, beta, self.order)

    def value(self, P):
        return float(np.einsum("l,lij,lij->", self.w, P, self.C))

    def dual(self, G):
        """Dual objective at a feasible point built from column potentials."""
        n = self.n
        G = G.copy()
        G[:, :n] -= np.einsum("l,lj->j", self.w, G[:, :n])[None, :]
        F = np.min(self.C - G[:, None, :], axis=2)
        F = np.where(self.live, F, 0.0)
        val = np.einsum("l,li,li->", self.w, self.alpha, F)
        if self.has_dummy:
            Gd = np.min(np.where(self.live, -F, np.inf), axis=1)
            val += self.delta * float(self.w @ Gd)
        return float(val)

    def unstack(self, P):
        plans = []
        for l, nl in enumerate(self.sizes):
            Q = P[l, :nl]
            if not self.has_dummy:
                Q = np.hstack([Q, np.zeros((nl, 1))])
            plans.append(Q)
        return tuple(plans)


def solve_fixed_awb(
    problem: FixedProblem,
    additive_error=1e-3,
    max_iter=10_000,
    check_every=10,
    patience=10,
) -> FixedSolution:
    """Entropic fixed-support solver with a certified additive error.

    Parameters
    ----------
    problem : FixedProblem
    additive_error : float
        Returned value is at most the LP optimum plus this amount.
    max_iter : int
        Cap on projection sweeps over all measures.

    Returns
    -------
    FixedSolution
        Plans satisfy their marginals exactly after rounding; the dummy
        column of every plan carries ``zeta / (1 - zeta)``.

    Raises
    ------
    ConvergenceError
        If the certificate is not reached; ``residual`` is the last
        weighted row-marginal residual.
    """
    if not additive_error > 0:
        raise InputError("additive_error must be > 0")
    S = _Stacked(problem)
    n, C, w = S.n, S.C, S.w
    m, r, c = C.shape
    if S.cmax == 0.0:
        P = np.zeros_like(C)
        P[:, :, :] = S.alpha[:, :, None] / c
        b, P = S.rounded(P)
        return FixedSolution(b, S.unstack(P), problem.objective(S.unstack(P)), 0.0, 0)

    gamma_target = additive_error / (4.0 * math.log(max(r * c, 2)))
    gamma = max(gamma_target, S.cmax)
    stage_tol = additive_error / (4.0 * S.cmax)
    log_delta = math.log(S.delta) if S.has_dummy else 0.0
    F = np.zeros((m, r))
    G = np.zeros((m, c))
    best = (math.inf, None, None)
    best_dual = -math.inf
    history, it, gap, resid = [], 0, math.inf, math.inf
    while it < max_iter:
        for _ in range(check_every):
            F = gamma * (S.log_alpha - _lse((G[:, None, :] - C) / gamma, axis=2))
            logcol = _lse((F[:, :, None] - C) / gamma, axis=1) + G / gamma
            logb = w @ logcol[:, :n]
            G[:, :n] += gamma * (logb[None, :] - logcol[:, :n])
            if S.has_dummy:
                G[:, n] += gamma * (log_delta - logcol[:, n])
        it += check_every
        with np.errstate(under="ignore"):
            P = np.exp((F[:, :, None] + G[:, None, :] - C) / gamma)
        resid = float(w @ np.abs(P.sum(axis=2) - S.alpha).sum(axis=1))
        b, Pr = S.rounded(P)
        primal = S.value(Pr)
        if primal < best[0]:
            best = (primal, b, Pr)
        best_dual = max(best_dual, S.dual(G))
        gap = best[0] - best_dual
        if gap <= additive_error:
            plans = S.unstack(best[2])
            return FixedSolution(best[1], plans, problem.objective(plans), max(gap, 0.0), it)
        history.append((resid, primal - best_dual))
        stalled = stage_stalled(history, patience, watch_gap=True)
        if gamma > gamma_target and (resid <= stage_tol or stalled):
            gamma = max(gamma_target, gamma / 2.0)
            history = []
    raise ConvergenceError(
        f"Bregman projections did not certify additive error {additive_error} in "
        f"{max_iter} sweeps (duality gap {gap:.3e}, marginal residual {resid:.3e})",
        residual=resid,
    )
