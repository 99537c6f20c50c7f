"""Discrete optimal transport for arbitrary nonnegative cost matrices.

Two solvers share one contract (an :class:`OtSolution` whose plan satisfies
both marginals):

* :func:`solve_ot_exact` is a dense transportation simplex. It is slow in
  the asymptotic sense but returns an optimal vertex, so it is used as the
  reference everywhere else.
* :func:`solve_ot_entropic` runs log-domain Sinkhorn iterations with a
  decreasing temperature, rounds the iterate onto the transportation
  polytope and stops once a primal-dual certificate proves the rounded plan
  is within ``additive_error`` of the optimum.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, minimum_spanning_tree
from scipy.special import logsumexp

from .errors import ConvergenceError, InputError
from .measures import DiscreteMeasure, build_cost_matrix

MARGINAL_TOL = 1e-8


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative coupling together with its prescribed marginals."""

    entries: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.entries, dtype=np.float64)
        a = np.asarray(self.row_marginal, dtype=np.float64)
        b = np.asarray(self.col_marginal, dtype=np.float64)
        if P.shape != (a.size, b.size):
            raise InputError(f"plan shape {P.shape} does not match marginals")
        for name, arr in (("entries", P), ("row_marginal", a), ("col_marginal", b)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def marginal_error(self):
        """Largest absolute deviation of row/column sums from the marginals."""
        er = np.abs(self.entries.sum(axis=1) - self.row_marginal).max()
        ec = np.abs(self.entries.sum(axis=0) - self.col_marginal).max()
        return float(max(er, ec))

    def is_feasible(self, tol=MARGINAL_TOL):
        return bool(self.entries.min() >= -tol and self.marginal_error() <= tol)

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True)
class OtSolution:
    value: float
    plan: TransportPlan
    # Certified upper bound on value - optimum; 0 for the exact solver.
    gap: float = 0.0
    iterations: int = 0


def _check_problem(a, b, C):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    C = np.asarray(C, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise InputError("marginals must be nonempty")
    if C.shape != (a.size, b.size):
        raise InputError(f"cost shape {C.shape} does not match marginals ({a.size}, {b.size})")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InputError("marginals must be finite")
    if np.any(a < 0) or np.any(b < 0):
        raise InputError("marginals must be nonnegative")
    if not np.all(np.isfinite(C)):
        raise InputError("cost matrix must be finite")
    if np.any(C < 0):
        raise InputError("cost matrix must be nonnegative")
    sa, sb = math.fsum(a), math.fsum(b)
    if abs(sa - sb) > MARGINAL_TOL * max(1.0, sa):
        raise InputError(f"mass mismatch: row mass {sa!r} vs column mass {sb!r}")
    if not sa > 0:
        raise InputError("marginals carry no mass")
    return a, b, C


# ---------------------------------------------------------------------------
# Transportation simplex
# ---------------------------------------------------------------------------


def _northwest_corner(a, b):
    n, k = a.size, b.size
    x = np.zeros((n, k))
    basis = []
    s, d = a.copy(), b.copy()
    i = j = 0
    while True:
        q = min(s[i], d[j])
        x[i, j] = q
        basis.append((i, j))
        s[i] -= q
        d[j] -= q
        if i == n - 1 and j == k - 1:
            break
        if i == n - 1:
            j += 1
        elif j == k - 1:
            i += 1
        elif s[i] <= d[j]:
            i += 1
        else:
            j += 1
    return x, basis


def _potentials(C, basis, n, k):
    """Solve u_i + v_j = C_ij on the basic cells (a spanning tree)."""
    rows = [[] for _ in range(n)]
    cols = [[] for _ in range(k)]
    for i, j in basis:
        rows[i].append(j)
        cols[j].append(i)
    u = np.full(n, np.nan)
    v = np.full(k, np.nan)
    u[0] = 0.0
    stack = [(0, True)]
    while stack:
        node, is_row = stack.pop()
        if is_row:
            for j in rows[node]:
                if np.isnan(v[j]):
                    v[j] = C[node, j] - u[node]
                    stack.append((j, False))
        else:
            for i in cols[node]:
                if np.isnan(u[i]):
                    u[i] = C[i, node] - v[node]
                    stack.append((i, True))
    return u, v, rows, cols


def _tree_path(p, q, rows, cols, n):
    """Basic cells on the tree path from row ``p`` to column ``q``,
    ordered starting at column ``q``."""
    # nodes: rows 0..n-1, columns n..n+k-1
    start, goal = p, n + q
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        if node < n:
            nbrs = (n + j for j in rows[node])
        else:
            nbrs = iter(cols[node - n])
        for nb in nbrs:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = []
    node = goal
    while parent[node] is not None:
        prev = parent[node]
        if node >= n:
            path.append((prev, node - n))
        else:
            path.append((node, prev - n))
        node = prev
    return path


def _transport_simplex(a, b, C, max_iter=None, degenerate_switch=25):
    n, k = C.shape
    if max_iter is None:
        max_iter = 50 * (n + k) ** 2 + 100
    tol = 1e-11 * max(1.0, float(np.abs(C).max()))
    x, basis = _northwest_corner(a, b)
    basis_set = set(basis)
    use_bland = False
    degenerate_run = 0
    for it in range(max_iter):
        u, v, rows, cols = _potentials(C, basis, n, k)
        red = C - u[:, None] - v[None, :]
        for i, j in basis:
            red[i, j] = 0.0
        if red.min() >= -tol:
            return x, it
        if use_bland:
            flat = np.flatnonzero(red.ravel() < -tol)[0]
        else:
            flat = int(np.argmin(red))
        p, q = divmod(int(flat), k)
        path = _tree_path(p, q, rows, cols, n)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(x[c] for c in minus)
        ties = [c for c in minus if x[c] <= theta]
        leave = min(ties) if use_bland else ties[0]
        for c in minus:
            x[c] -= theta
        for c in plus:
            x[c] += theta
        x[p, q] += theta
        x[leave] = 0.0
        basis_set.discard(leave)
        basis_set.add((p, q))
        basis = sorted(basis_set)
        if theta <= 0.0:
            degenerate_run += 1
            if degenerate_run >= degenerate_switch:
                use_bland = True
        else:
            degenerate_run = 0
    raise ConvergenceError(f"transportation simplex did not terminate in {max_iter} pivots")


def _support(a, b):
    return np.flatnonzero(a > 0), np.flatnonzero(b > 0)


def solve_ot_exact(a, b, C) -> OtSolution:
    """Exact discrete optimal transport.

    Parameters
    ----------
    a, b : array-like
        Nonnegative marginals with equal total mass.
    C : array-like or CostMatrix, shape (len(a), len(b))
        Nonnegative finite cost.

    Returns
    -------
    OtSolution
        ``value = <plan, C>`` at an optimal vertex of the transportation
        polytope.
    """
    a, b, C = _check_problem(a, b, C)
    I, J = _support(a, b)
    a_s, b_s = a[I], b[J]
    # rescale the column mass to the row mass so NW-corner closes exactly
    b_s = b_s * (a_s.sum() / b_s.sum())
    x_s, it = _transport_simplex(a_s, b_s, C[np.ix_(I, J)])
    P = np.zeros_like(C)
    P[np.ix_(I, J)] = np.maximum(x_s, 0.0)
    value = float(np.sum(P * C))
    return OtSolution(value, TransportPlan(P, a, b), 0.0, it)


# ---------------------------------------------------------------------------
# Entropic solver
# ---------------------------------------------------------------------------


def round_to_marginals(P, a, b):
    """Project a nonnegative matrix onto the transportation polytope.

    Scales rows then columns down to their targets and spreads the
    remaining deficit with a rank-one correction, so that both marginals
    hold exactly (the rounding step of Altschuler, Weed and Rigollet).
    """
    P = np.asarray(P, dtype=np.float64)
    r = P.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fr = np.where(r > 0, np.minimum(a / r, 1.0), 1.0)
    X = P * fr[:, None]
    c = X.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        fc = np.where(c > 0, np.minimum(b / c, 1.0), 1.0)
    Y = X * fc[None, :]
    er = np.maximum(a - Y.sum(axis=1), 0.0)
    ec = np.maximum(b - Y.sum(axis=0), 0.0)
    s = er.sum()
    if s > 0:
        Y = Y + np.outer(er, ec) / s
    return Y


def dual_lower_bound(a, b, C, g):
    """Objective of the OT dual at the feasible pair obtained from ``g`` by
    two c-transforms; a lower bound on the optimal cost."""
    f = np.min(C - g[None, :], axis=1)
    g = np.min(C - f[:, None], axis=0)
    return float(a @ f + b @ g)


def tree_potentials(C, f, g):
    """Exact potentials on the spanning tree of smallest reduced cost.

    Entropic potentials carry a bias proportional to the temperature on
    degenerate problems. Fixing ``f_i + g_j = C_ij`` on the tree that the
    scaled plan favours removes it whenever that tree is an optimal basis.
    Returns the column potential only; feed it to :func:`dual_lower_bound`.
    """
    n, k = C.shape
    r = C - f[:, None] - g[None, :]
    w = r - r.min() + 1.0
    rows = np.repeat(np.arange(n), k)
    cols = n + np.tile(np.arange(k), n)
    graph = coo_matrix((w.ravel(), (rows, cols)), shape=(n + k, n + k))
    tree = minimum_spanning_tree(graph)
    tree = (tree + tree.T).tocsr()
    order, parent = breadth_first_order(tree, 0, directed=False)
    pot = np.zeros(n + k)
    for v in order[1:]:
        p = parent[v]
        i, j = (p, v - n) if v >= n else (v, p - n)
        # f_i + g_j = C_ij, with f stored at i and g at n + j
        pot[v] = C[i, j] - pot[p]
    return pot[n:]


def default_temperature(additive_error, n, k):
    return additive_error / (4.0 * math.log(max(n * k, 2)))


def stage_stalled(history, patience, watch_gap=False):
    """Whether a temperature stage has stopped paying off.

    ``history`` holds ``(marginal residual, primal gap)`` per check. Across
    the last ``patience`` checks, a stage is over when the residual has
    stopped moving (round-off floor on degenerate costs). With
    ``watch_gap`` it also ends when the gap shrank by less than one percent
    while the residual converges slowly; this pays off when a few huge
    costs (far outliers) make the residual target tiny, and hurts on small
    degenerate problems, so only the barycenter solver enables it.
    """
    if len(history) <= patience:
        return False
    r0, g0 = history[-patience - 1]
    r1, g1 = history[-1]
    if r1 > 0.999 * r0:
        return True
    return watch_gap and g1 > 0.99 * g0 and r1 > 0.5 * r0


def _sinkhorn(a, b, C, additive_error, max_iter, check_every=10, patience=10):
    n, k = C.shape
    la, lb = np.log(a), np.log(b)
    gamma_target = default_temperature(additive_error, n, k)
    cmax = float(C.max())
    gamma = max(gamma_target, cmax)
    # rounding moves at most resid mass, each unit costing at most cmax
    stage_tol = additive_error / (4.0 * max(cmax, 1e-300))
    f = np.zeros(n)
    g = np.zeros(k)
    it = 0
    gap = math.inf
    best_primal, best_plan, best_dual = math.inf, None, -math.inf
    history = []
    while it < max_iter:
        for _ in range(check_every):
            f = gamma * (la - logsumexp((g[None, :] - C) / gamma, axis=1))
            g = gamma * (lb - logsumexp((f[:, None] - C) / gamma, axis=0))
        it += check_every
        P = np.exp((f[:, None] + g[None, :] - C) / gamma)
        resid = float(np.abs(P.sum(axis=1) - a).sum())
        Pr = round_to_marginals(P, a, b)
        primal = float(np.sum(Pr * C))
        if primal < best_primal:
            best_primal, best_plan = primal, Pr
        best_dual = max(
            best_dual,
            dual_lower_bound(a, b, C, g),
            dual_lower_bound(a, b, C, tree_potentials(C, f, g)),
        )
        gap = best_primal - best_dual
        if gap <= additive_error:
            return best_plan, it, max(gap, 0.0)
        history.append((resid, primal - best_dual))
        stalled = stage_stalled(history, patience)
        if gamma > gamma_target and (resid <= stage_tol or stalled):
            gamma = max(gamma_target, gamma / 2.0)
            history = []
    raise ConvergenceError(
        f"Sinkhorn did not certify additive error {additive_error} in {max_iter} iterations "
        f"(last duality gap {gap:.3e})",
        residual=gap,
    )


def solve_ot_entropic(a, b, C, additive_error=1e-3, max_iter=100_000) -> OtSolution:
    """Approximate OT whose plan satisfies both marginals exactly and whose
    cost exceeds the optimum by at most ``additive_error``.

    The temperature starts at ``max(C)`` and halves down to
    ``additive_error / (4 log(n n'))``; iterations stop as soon as the
    rounded plan's cost minus a dual lower bound drops below
    ``additive_error``.

    Raises
    ------
    ConvergenceError
        If the certificate is not reached within ``max_iter`` Sinkhorn
        sweeps. ``residual`` holds the last duality gap.
    """
    if not additive_error > 0:
        raise InputError("additive_error must be > 0")
    a, b, C = _check_problem(a, b, C)
    I, J = _support(a, b)
    a_s, b_s, C_s = a[I], b[J], C[np.ix_(I, J)]
    b_s = b_s * (a_s.sum() / b_s.sum())
    if I.size == 1 or J.size == 1:
        P_s = np.outer(a_s, b_s) / a_s.sum()
        it, gap = 0, 0.0
    else:
        P_s, it, gap = _sinkhorn(a_s, b_s, C_s, additive_error, max_iter)
    P = np.zeros_like(C)
    P[np.ix_(I, J)] = P_s
    value = float(np.sum(P * C))
    return OtSolution(value, TransportPlan(P, a, b), float(gap), it)


def wasserstein_power(mu: DiscreteMeasure, nu: DiscreteMeasure, z=2.0) -> float:
    """Exact ``W_z(mu, nu) ** z``."""
    C = build_cost_matrix(mu.locations, nu.locations, z)
    return solve_ot_exact(mu.weights, nu.weights, C).value


def wasserstein_distance(mu: DiscreteMeasure, nu: DiscreteMeasure, z=2.0) -> float:
    """Exact Wasserstein distance ``W_z(mu, nu)``."""
    return max(wasserstein_power(mu, nu, z), 0.0) ** (1.0 / z)
