"""Robust Wasserstein distance through a dummy-point augmentation.

Trimming ``zeta_mu`` mass from ``mu`` and ``zeta_nu`` mass from ``nu`` and
renormalizing is equivalent to a plain transport problem in which each side
gains one extra atom with zero cost to everything. The dummy row absorbs the
mass trimmed from ``nu`` and the dummy column the mass trimmed from ``mu``.
:func:`phi_embed` and :func:`psi_extract` translate between the two
formulations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .measures import CostMatrix, DiscreteMeasure, build_cost_matrix
from .ot import MARGINAL_TOL, TransportPlan, solve_ot_entropic, solve_ot_exact

CORNER_TOL = 1e-10


@dataclass(frozen=True)
class OutlierBudget:
    """Outlier mass allowed on each side, both in ``[0, 1)``."""

    zeta_mu: float = 0.0
    zeta_nu: float = 0.0

    def __post_init__(self):
        for name in ("zeta_mu", "zeta_nu"):
            v = float(getattr(self, name))
            if not 0.0 <= v < 1.0:
                raise InputError(f"{name} must lie in [0, 1), got {v}")
            object.__setattr__(self, name, v)

    @property
    def mu_dummy_mass(self):
        """Mass of the dummy column, ``zeta_mu / (1 - zeta_mu)``."""
        return self.zeta_mu / (1.0 - self.zeta_mu)

    @property
    def nu_dummy_mass(self):
        """Mass of the dummy row, ``zeta_nu / (1 - zeta_nu)``."""
        return self.zeta_nu / (1.0 - self.zeta_nu)


@dataclass(frozen=True)
class AugmentedPair:
    a_aug: np.ndarray
    b_aug: np.ndarray
    C_aug: CostMatrix


@dataclass(frozen=True)
class RobustSolution:
    """Optimal trimming and coupling.

    ``value`` is the z-th power of the robust distance. ``plan`` couples
    ``(a - a_out) / (1 - zeta_mu)`` with ``(b - b_out) / (1 - zeta_nu)``.
    """

    value: float
    plan: TransportPlan
    a_out: np.ndarray
    b_out: np.ndarray
    plan_aug: TransportPlan
    gap: float = 0.0


def augment_marginals(a, b, budget: OutlierBudget):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a_aug = np.append(a / (1.0 - budget.zeta_mu), budget.nu_dummy_mass)
    b_aug = np.append(b / (1.0 - budget.zeta_nu), budget.mu_dummy_mass)
    return a_aug, b_aug


def augment_cost(C):
    C = np.asarray(C, dtype=np.float64)
    C_aug = np.zeros((C.shape[0] + 1, C.shape[1] + 1))
    C_aug[:-1, :-1] = C
    return C_aug


def augment_pair(mu: DiscreteMeasure, nu: DiscreteMeasure, budget: OutlierBudget, z=2.0):
    """Augmented marginals and cost for the pair ``(mu, nu)``."""
    C = build_cost_matrix(mu.locations, nu.locations, z)
    a_aug, b_aug = augment_marginals(mu.weights, nu.weights, budget)
    return AugmentedPair(a_aug, b_aug, CostMatrix(augment_cost(C.entries), C.z))


def _check_outliers(name, out, full, zeta):
    out = np.asarray(out, dtype=np.float64).reshape(-1)
    if out.size != full.size:
        raise InputError(f"{name} has length {out.size}, expected {full.size}")
    if np.any(out < -MARGINAL_TOL):
        raise InputError(f"{name} must be nonnegative")
    if abs(out.sum() - zeta) > MARGINAL_TOL:
        raise InputError(f"{name} must sum to {zeta}, got {out.sum()!r}")
    if np.any(out > full + MARGINAL_TOL):
        raise InputError(f"{name} exceeds the measure's weights")
    return out


def phi_embed(a_out, b_out, plan: TransportPlan, budget: OutlierBudget) -> TransportPlan:
    """Map a feasible trimming ``(a_out, b_out, plan)`` to an augmented plan.

    The original weights are recovered as
    ``a = (1 - zeta_mu) * plan.row_marginal + a_out`` (likewise for ``b``).
    """
    zm, zn = budget.zeta_mu, budget.zeta_nu
    if not plan.is_feasible():
        raise InputError("plan violates its marginals")
    if abs(plan.entries.sum() - 1.0) > MARGINAL_TOL:
        raise InputError("plan must carry unit mass")
    a_out = np.asarray(a_out, dtype=np.float64).reshape(-1)
    b_out = np.asarray(b_out, dtype=np.float64).reshape(-1)
    if a_out.size != plan.shape[0] or b_out.size != plan.shape[1]:
        raise InputError("outlier vectors do not match the plan's shape")
    a = (1.0 - zm) * plan.row_marginal + a_out
    b = (1.0 - zn) * plan.col_marginal + b_out
    a_out = _check_outliers("a_out", a_out, a, zm)
    b_out = _check_outliers("b_out", b_out, b, zn)
    n, k = plan.shape
    P = np.zeros((n + 1, k + 1))
    P[:n, :k] = plan.entries
    P[:n, k] = a_out / (1.0 - zm)
    P[n, :k] = b_out / (1.0 - zn)
    a_aug, b_aug = augment_marginals(a, b, budget)
    return TransportPlan(P, a_aug, b_aug)


def psi_extract(plan_aug: TransportPlan, budget: OutlierBudget):
    """Inverse of :func:`phi_embed`; returns ``(a_out, b_out, plan)``.

    Raises
    ------
    InputError
        If the dummy-dummy entry exceeds ``1e-10``.
    """
    zm, zn = budget.zeta_mu, budget.zeta_nu
    P = plan_aug.entries
    if P[-1, -1] > CORNER_TOL:
        raise InputError(f"augmented plan has nonzero corner entry {P[-1, -1]:.3e}")
    a_out = (1.0 - zm) * P[:-1, -1]
    b_out = (1.0 - zn) * P[-1, :-1]
    row = plan_aug.row_marginal[:-1] - P[:-1, -1]
    col = plan_aug.col_marginal[:-1] - P[-1, :-1]
    plan = TransportPlan(P[:-1, :-1], row, col)
    return a_out, b_out, plan


def clear_corner(P):
    """Move mass off the dummy-dummy entry without changing marginals.

    A share ``c * B / T`` of the real block ``B`` (total ``T``) is moved to
    the dummy row and column, where it costs nothing, and ``c`` is removed
    from the corner. The cost never increases.
    """
    P = np.array(P, dtype=np.float64)
    c = P[-1, -1]
    if c <= 0:
        P[-1, -1] = 0.0
        return P
    B = P[:-1, :-1]
    T = B.sum()
    # an augmented plan's block carries at least unit mass, so T > c
    if not T >= c:
        raise InputError(f"corner mass {c!r} exceeds the real block's mass {T!r}")
    s = c / T
    P[:-1, -1] += s * B.sum(axis=1)
    P[-1, :-1] += s * B.sum(axis=0)
    P[:-1, :-1] = B * (1.0 - s)
    P[-1, -1] = 0.0
    return P


def robust_ot(a, b, C, budget: OutlierBudget, mode="exact", additive_error=None):
    """Array-level robust OT; see :func:`robust_distance`."""
    a_aug, b_aug = augment_marginals(a, b, budget)
    C_aug = augment_cost(C)
    if mode == "exact":
        sol = solve_ot_exact(a_aug, b_aug, C_aug)
    elif mode == "entropic":
        if additive_error is None or not additive_error > 0:
            raise InputError("entropic mode needs additive_error > 0")
        sol = solve_ot_entropic(a_aug, b_aug, C_aug, additive_error)
    else:
        raise InputError(f"unknown mode {mode!r}")
    P = clear_corner(sol.plan.entries)
    plan_aug = TransportPlan(P, a_aug, b_aug)
    a_out, b_out, plan = psi_extract(plan_aug, budget)
    value = float(np.sum(plan.entries * np.asarray(C, dtype=np.float64)))
    return RobustSolution(value, plan, a_out, b_out, plan_aug, sol.gap)


def robust_distance(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    budget: OutlierBudget,
    z=2.0,
    mode="exact",
    additive_error=None,
) -> RobustSolution:
    """Robust transport cost between two measures.

    Parameters
    ----------
    mu, nu : DiscreteMeasure
    budget : OutlierBudget
    z : float
        Cost exponent.
    mode : {"exact", "entropic"}
    additive_error : float, optional
        Accuracy for the entropic mode.

    Returns
    -------
    RobustSolution
        ``value`` is the z-th power of the robust distance.
    """
    C = build_cost_matrix(mu.locations, nu.locations, z)
    return robust_ot(mu.weights, nu.weights, C.entries, budget, mode, additive_error)


def robust_wasserstein(mu, nu, budget: OutlierBudget, z=2.0, **kwargs) -> float:
    """The robust distance itself, i.e. the z-th root of the optimal cost."""
    value = robust_distance(mu, nu, budget, z, **kwargs).value
    return max(value, 0.0) ** (1.0 / z) if z != 1 else max(value, 0.0)


__all__ = [
    "OutlierBudget",
    "AugmentedPair",
    "RobustSolution",
    "augment_pair",
    "phi_embed",
    "psi_extract",
    "clear_corner",
    "robust_ot",
    "robust_distance",
    "robust_wasserstein",
]
