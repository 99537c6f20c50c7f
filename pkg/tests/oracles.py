"""Independent reference solvers used by the tests.

Everything here is written directly from the problem definitions with
``scipy.optimize.linprog`` or plain enumeration. None of it imports the
package's solvers, so agreement is a genuine cross-check.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist


def cost(X, Y, z):
    return cdist(np.atleast_2d(X), np.atleast_2d(Y)) ** z


def _solve(c, A_eq, b_eq):
    res = linprog(
        c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    assert res.status == 0, res.message
    return res


def _marginal_rows(n, k):
    """Row-sum and column-sum operators on a row-major n x k plan."""
    R = np.kron(np.eye(n), np.ones((1, k)))
    S = np.kron(np.ones((1, n)), np.eye(k))
    return R, S


def ot_lp(a, b, C):
    """Optimal transport cost between ``a`` and ``b``."""
    a, b, C = np.asarray(a, float), np.asarray(b, float), np.asarray(C, float)
    n, k = C.shape
    R, S = _marginal_rows(n, k)
    res = _solve(C.ravel(), np.vstack([R, S]), np.concatenate([a, b]))
    return res.fun, res.x.reshape(n, k)


def ot_brute_uniform(C):
    """OT cost for square C with uniform marginals, by enumerating
    permutations (optimal plans include a scaled permutation matrix)."""
    C = np.asarray(C, float)
    n = C.shape[0]
    rows = np.arange(n)
    return min(C[rows, list(p)].sum() for p in itertools.permutations(range(n))) / n


def rwd_direct_lp(a, b, C, zeta_mu, zeta_nu):
    """Robust transport cost in its direct form.

    Variables are the plan ``P`` and the outlier vectors ``a_out, b_out``::

        P 1   = (a - a_out) / (1 - zeta_mu),   sum(a_out) = zeta_mu
        P^T 1 = (b - b_out) / (1 - zeta_nu),   sum(b_out) = zeta_nu

    with everything nonnegative. Returns ``(value, P, a_out, b_out)``.
    """
    a, b, C = np.asarray(a, float), np.asarray(b, float), np.asarray(C, float)
    n, k = C.shape
    R, S = _marginal_rows(n, k)
    nv = n * k + n + k
    A = np.zeros((n + k + 2, nv))
    A[:n, : n * k] = R
    A[:n, n * k : n * k + n] = np.eye(n) / (1 - zeta_mu)
    A[n : n + k, : n * k] = S
    A[n : n + k, n * k + n :] = np.eye(k) / (1 - zeta_nu)
    A[n + k, n * k : n * k + n] = 1.0
    A[n + k + 1, n * k + n :] = 1.0
    rhs = np.concatenate([a / (1 - zeta_mu), b / (1 - zeta_nu), [zeta_mu, zeta_nu]])
    c = np.concatenate([C.ravel(), np.zeros(n + k)])
    res = _solve(c, A, rhs)
    x = res.x
    return res.fun, x[: n * k].reshape(n, k), x[n * k : n * k + n], x[n * k + n :]


def rwb_direct(measures, omega, nu_points, nu_weights, zeta, z):
    """Weighted mean of direct robust costs, trimming the input side only."""
    omega = np.asarray(omega, float)
    vals = [
        rwd_direct_lp(w, nu_weights, cost(X, nu_points, z), zeta, 0.0)[0]
        for X, w in measures
    ]
    return float(np.dot(omega, vals) / omega.sum())


def fixed_rwb_lp(measures, omega, Y, zeta, z):
    """Fixed-support robust barycenter in its direct form.

    ``measures`` is a list of ``(X, a)``. Variables are one plan per measure,
    an outlier vector per measure and the shared weights ``b``. With
    ``zeta = 0`` this is the plain fixed-support barycenter LP.
    Returns ``(value, b)``.
    """
    omega = np.asarray(omega, float)
    omega = omega / omega.sum()
    Y = np.atleast_2d(Y)
    k = Y.shape[0]
    blocks, cols = [], 0
    for X, a in measures:
        n = len(a)
        blocks.append((cols, n))
        cols += n * k + n
    nv = cols + k
    rows, rhs, c = [], [], np.zeros(nv)
    for (X, a), (off, n), w in zip(measures, blocks, omega):
        C = cost(X, Y, z)
        c[off : off + n * k] = w * C.ravel()
        R, S = _marginal_rows(n, k)
        for i in range(n):
            row = np.zeros(nv)
            row[off : off + n * k] = R[i]
            row[off + n * k + i] = 1.0 / (1 - zeta)
            rows.append(row)
            rhs.append(a[i] / (1 - zeta))
        for j in range(k):
            row = np.zeros(nv)
            row[off : off + n * k] = S[j]
            row[cols + j] = -1.0
            rows.append(row)
            rhs.append(0.0)
        row = np.zeros(nv)
        row[off + n * k : off + n * k + n] = 1.0
        rows.append(row)
        rhs.append(zeta)
    row = np.zeros(nv)
    row[cols:] = 1.0
    rows.append(row)
    rhs.append(1.0)
    res = _solve(c, np.array(rows), np.array(rhs))
    return res.fun, res.x[cols:]
